#include "resp/keyframes.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iomanip>
#include <regex>
#include <sstream>

#include "resp/io.hpp"

extern char** environ;

namespace resp::keyframes {

namespace fs = std::filesystem;

ProcessResult run_process(const std::vector<std::string>& argv) {
  if (argv.empty()) throw Error(ErrorKind::Invariant, "EmptyArgv", "run_process");
  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) throw Error(ErrorKind::Input, "SpawnFailed", std::strerror(errno));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDERR_FILENO);

  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  pid_t pid = 0;
  int rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(pipefd[1]);
  if (rc != 0) {
    ::close(pipefd[0]);
    throw Error(ErrorKind::Input, "DecoderNotFound", argv[0] + ": " + std::strerror(rc));
  }

  ProcessResult result;
  char buf[4096];
  for (;;) {
    ssize_t n = ::read(pipefd[0], buf, sizeof buf);
    if (n > 0) {
      result.stderr_text.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0 || errno != EINTR) {
      break;
    }
  }
  ::close(pipefd[0]);

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

fs::path resolve_decoder(const std::string& configured) {
  std::string name = configured;
  if (name.empty()) {
    const char* env = std::getenv("RESP_FFMPEG");
    name = (env && *env) ? env : "ffmpeg";
  }
  auto executable = [](const fs::path& p) { return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0; };
  if (name.find('/') != std::string::npos) {
    if (executable(name)) return name;
    throw Error(ErrorKind::Input, "DecoderNotFound", name);
  }
  const char* path_env = std::getenv("PATH");
  std::stringstream dirs(path_env ? path_env : "");
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    fs::path candidate = fs::path(dir) / name;
    if (executable(candidate)) return candidate;
  }
  throw Error(ErrorKind::Input, "DecoderNotFound", name + " not found on PATH");
}

std::string default_video_id(const fs::path& video) { return video.stem().string(); }

namespace {

std::string format_rate(double r) {
  std::ostringstream ss;
  ss << std::setprecision(15) << r;
  return ss.str();
}

std::string escape_percent(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += c;
    if (c == '%') out += '%';
  }
  return out;
}

// JPEG quality 1..100 mapped linearly onto the decoder's qscale 31..2.
int jpeg_qscale(int quality) {
  quality = std::clamp(quality, 1, 100);
  return static_cast<int>(std::lround(31.0 - (quality - 1) * 29.0 / 99.0));
}

std::string frame_filename(const std::string& video_id, int index, const std::string& ext) {
  std::ostringstream ss;
  ss << video_id << '_' << std::setw(5) << std::setfill('0') << index << '.' << ext;
  return ss.str();
}

}  // namespace

std::vector<std::string> decoder_argv(const fs::path& decoder, const fs::path& video, const std::string& video_id,
                                      const ExtractionConfig& cfg) {
  std::string filter = cfg.mode.kind == ExtractionMode::Kind::IFrames
                           ? "select='eq(pict_type,I)',showinfo"
                           : "fps=" + format_rate(cfg.mode.rate) + ",showinfo";
  std::vector<std::string> argv{decoder.string(), "-hide_banner", "-nostdin", "-nostats", "-y",
                                "-i",             video.string(), "-vf",       filter,     "-fps_mode",
                                "vfr",            "-start_number", "1"};
  if (cfg.image_format.kind == ImageFormat::Kind::Jpeg) {
    argv.push_back("-q:v");
    argv.push_back(std::to_string(jpeg_qscale(cfg.image_format.quality)));
  }
  auto pattern = cfg.output_dir / (escape_percent(video_id) + "_%05d." + cfg.image_format.extension());
  argv.push_back(pattern.string());
  return argv;
}

std::vector<double> parse_showinfo_timestamps(const std::string& stderr_text) {
  static const std::regex line_re(R"(Parsed_showinfo.*\bn:\s*\d+\s+pts:\s*-?\d+\s+pts_time:(-?[0-9.eE+-]+))");
  std::vector<double> out;
  std::istringstream in(stderr_text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line))
    if (std::regex_search(line, m, line_re)) out.push_back(std::stod(m[1].str()));
  return out;
}

KeyframeManifest extract_keyframes(const fs::path& video, const ExtractionConfig& cfg, std::string video_id) {
  if (cfg.mode.kind == ExtractionMode::Kind::FixedFps && !(cfg.mode.rate > 0))
    throw Error(ErrorKind::Config, "InvalidConfig", "fixed-fps rate must be > 0");
  if (cfg.output_dir.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "output_dir is empty");
  const fs::path decoder = resolve_decoder(cfg.decoder_binary);
  if (video_id.empty()) video_id = default_video_id(video);
  if (!fs::exists(video)) throw Error(ErrorKind::Input, "DecodeFailed", "no such file: " + video.string());

  fs::create_directories(cfg.output_dir);
  const fs::path out_dir = fs::absolute(cfg.output_dir).lexically_normal();
  ExtractionConfig effective = cfg;
  effective.output_dir = out_dir;

  // Stale images from an earlier run would otherwise be picked up by the re-listing.
  const std::string ext = cfg.image_format.extension();
  const std::regex own_file(std::regex_replace(video_id, std::regex(R"([.^$|()\[\]{}*+?\\])"), R"(\$&)") +
                            "_\\d{5}\\." + ext);
  for (const auto& entry : fs::directory_iterator(out_dir))
    if (std::regex_match(entry.path().filename().string(), own_file)) fs::remove(entry.path());

  auto argv = decoder_argv(decoder, video, video_id, effective);
  auto result = run_process(argv);
  if (result.exit_code != 0) {
    auto& err = result.stderr_text;
    std::string excerpt = err.size() > 600 ? err.substr(err.size() - 600) : err;
    throw Error(ErrorKind::Input, "DecodeFailed",
                video.string() + " (exit " + std::to_string(result.exit_code) + "): " + excerpt);
  }

  const auto timestamps = parse_showinfo_timestamps(result.stderr_text);
  KeyframeManifest m;
  m.video_id = video_id;
  m.mode = cfg.mode;
  m.source_video = video;
  m.decoder_argv = argv;
  for (int i = 1;; ++i) {
    fs::path img = out_dir / frame_filename(video_id, i, ext);
    if (!fs::exists(img)) break;
    m.frames.push_back({video_id, i, 0.0, img});
  }
  if (m.frames.empty()) throw Error(ErrorKind::Input, "EmptyOutput", video.string() + " yielded zero frames");
  if (timestamps.size() != m.frames.size())
    throw Error(ErrorKind::Input, "DecodeFailed",
                "decoder reported " + std::to_string(timestamps.size()) + " frames but wrote " +
                    std::to_string(m.frames.size()));
  for (std::size_t i = 0; i < timestamps.size(); ++i) m.frames[i].timestamp_s = std::max(0.0, timestamps[i]);
  return m;
}

fs::path manifest_path(const fs::path& dir, const std::string& video_id) {
  return dir / (video_id + ".manifest.json");
}

std::string manifest_to_text(const KeyframeManifest& m) {
  std::string out = "{\n";
  out += "  \"video_id\": " + json(m.video_id).dump() + ",\n";
  out += "  \"mode\": " + json(m.mode).dump() + ",\n";
  out += "  \"source_video\": " + json(m.source_video.string()).dump() + ",\n";
  out += "  \"decoder_argv\": " + json(m.decoder_argv).dump() + ",\n";
  out += "  \"frames\": [\n";
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    out += "    " + json(m.frames[i]).dump();
    out += i + 1 < m.frames.size() ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

void write_manifest(const KeyframeManifest& m, const fs::path& path) { io::write_text_atomic(path, manifest_to_text(m)); }

namespace {

// Line number (1-based) at which each element of the top-level "frames" array starts.
std::vector<int> frame_element_lines(const std::string& text) {
  std::vector<int> lines;
  int line = 1, depth = 0;
  bool in_string = false, escape = false, in_frames = false;
  std::string last_key, current;
  for (char c : text) {
    if (c == '\n') ++line;
    if (in_string) {
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == '"') {
        in_string = false;
        last_key = current;
      } else {
        current += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        current.clear();
        break;
      case '{':
      case '[':
        if (depth == 1 && c == '[' && last_key == "frames") in_frames = true;
        if (in_frames && depth == 2) lines.push_back(line);
        ++depth;
        break;
      case '}':
      case ']':
        --depth;
        if (depth == 1) in_frames = false;
        break;
      default:
        break;
    }
  }
  return lines;
}

}  // namespace

KeyframeManifest parse_manifest(const std::string& text, const std::string& origin, bool strict) {
  KeyframeManifest m;
  try {
    m = json::parse(text).get<KeyframeManifest>();
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Input, "SchemaViolation", origin + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Input, "SchemaViolation", origin + ": " + e.what());
  }
  const auto lines = frame_element_lines(text);
  auto where = [&](std::size_t i) {
    return origin + ":" + (i < lines.size() ? std::to_string(lines[i]) : std::string("?"));
  };

  if (m.frames.empty()) throw Error(ErrorKind::Input, "SchemaViolation", origin + ": manifest has no frames");
  if (m.mode.kind == ExtractionMode::Kind::FixedFps && !(m.mode.rate > 0))
    throw Error(ErrorKind::Input, "SchemaViolation", origin + ": fixed_fps rate must be > 0");
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    const auto& f = m.frames[i];
    if (f.index != static_cast<int>(i) + 1)
      throw Error(ErrorKind::Input, "SchemaViolation",
                  where(i) + ": expected frame index " + std::to_string(i + 1) + ", found " + std::to_string(f.index));
    if (f.video_id != m.video_id)
      throw Error(ErrorKind::Input, "SchemaViolation", where(i) + ": frame video_id differs from manifest");
    if (f.timestamp_s < 0 || (i > 0 && !(f.timestamp_s > m.frames[i - 1].timestamp_s)))
      throw Error(ErrorKind::Input, "SchemaViolation", where(i) + ": timestamps must be >= 0 and strictly increasing");
  }
  if (strict) {
    const fs::path base = fs::path(origin).parent_path();
    for (std::size_t i = 0; i < m.frames.size(); ++i) {
      fs::path img = m.frames[i].image_path;
      if (img.is_relative()) img = base / img;
      if (!fs::exists(img)) throw Error(ErrorKind::Input, "MissingAsset", where(i) + ": " + img.string());
    }
  }
  return m;
}

KeyframeManifest load_manifest(const fs::path& path, bool strict) {
  return parse_manifest(io::read_text(path), path.string(), strict);
}

}  // namespace resp::keyframes
