#include "resp/cli.hpp"

int main(int argc, char** argv) { return resp::cli::run(argc, argv); }
