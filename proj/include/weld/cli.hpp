#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "weld/error.hpp"

namespace weld::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;  // e.g. the server cannot bind
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPipeline = 3;
inline constexpr int kExitCorrupt = 4;

int exit_code_for(ErrorCode code);

/// Entry point shared by the weldctl binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct BenchRow {
  std::int64_t frame = 0;
  std::string method;
  double cx = 0.0;  // NaN when the method found nothing
  double cy = 0.0;
  double error_px = 0.0;  // NaN without ground truth or estimate
  std::size_t candidates = 0;
  long tiles_065 = -1;  // -1 for methods without a confidence map
  long tiles_095 = -1;
};

struct BenchSummary {
  std::string method;
  std::size_t frames_scored = 0;
  double median_px = 0.0;
  double p95_px = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchSummary> summary;
  std::string frame_checksum;
};

/// Feeds one rendered frame stream to every method in `methods`
/// (lic, softmax, contour, intensity).
BenchResult bench(const std::filesystem::path& scenario, const std::vector<std::string>& methods);

}  // namespace weld::cli
