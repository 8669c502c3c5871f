#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "resp/core.hpp"

namespace resp::keyframes {

struct ImageFormat {
  enum class Kind { Png, Jpeg } kind = Kind::Png;
  int quality = 90;  // JPEG only, 1..100

  std::string extension() const { return kind == Kind::Png ? "png" : "jpg"; }
};

struct ExtractionConfig {
  ExtractionMode mode = ExtractionMode::iframes();
  std::filesystem::path output_dir;
  ImageFormat image_format;
  /// Empty: $RESP_FFMPEG if set, else `ffmpeg` from PATH.
  std::string decoder_binary;
};

struct ProcessResult {
  int exit_code = -1;
  std::string stderr_text;
};

/// Runs argv[0] (PATH-resolved) with stdout discarded and stderr captured.
ProcessResult run_process(const std::vector<std::string>& argv);

/// Resolves the decoder executable or throws DecoderNotFound.
std::filesystem::path resolve_decoder(const std::string& configured);

/// Default video id: the file stem.
std::string default_video_id(const std::filesystem::path& video);

/// The decoder argument vector used for extraction (recorded in the manifest).
std::vector<std::string> decoder_argv(const std::filesystem::path& decoder, const std::filesystem::path& video,
                                      const std::string& video_id, const ExtractionConfig& cfg);

/// Parses `pts_time` values from the decoder's showinfo log, in emission order.
std::vector<double> parse_showinfo_timestamps(const std::string& stderr_text);

/// Extracts keyframes to `<output_dir>/<video_id>_<index:05>.<ext>`.
/// Throws DecoderNotFound, DecodeFailed or EmptyOutput.
KeyframeManifest extract_keyframes(const std::filesystem::path& video, const ExtractionConfig& cfg,
                                   std::string video_id = {});

std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& video_id);

/// One frame per line, so schema errors can point at a line.
std::string manifest_to_text(const KeyframeManifest& m);
void write_manifest(const KeyframeManifest& m, const std::filesystem::path& path);

/// Validates ordering/contiguity (SchemaViolation, with line number) and, when strict,
/// that every image exists (MissingAsset).
KeyframeManifest load_manifest(const std::filesystem::path& path, bool strict = false);
KeyframeManifest parse_manifest(const std::string& text, const std::string& origin, bool strict = false);

}  // namespace resp::keyframes
