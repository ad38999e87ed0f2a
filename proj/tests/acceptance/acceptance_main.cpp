// Runs every acceptance criterion and prints one PASS/FAIL/SKIP line each.
// Set HTN_MNIST_DIR and HTN_LONG=1 to include the MNIST run.

#include "htn/verify.hpp"

#include <cstdio>
#include <cstdlib>

int main() {
  htn::verify::VerifyOptions opts;
  opts.data_dir = HTN_DATA_DIR;
  const char* mnist = std::getenv("HTN_MNIST_DIR");
  opts.mnist_dir = mnist ? mnist : HTN_DATA_DIR "/mnist";
  const char* long_flag = std::getenv("HTN_LONG");
  opts.long_running = long_flag && std::string(long_flag) == "1";
  opts.progress = [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };
  int failed = 0;
  for (int id = 1; id <= htn::verify::kCriterionCount; ++id) {
    const auto r = htn::verify::run_criterion(id, opts);
    std::printf("%s\n", htn::verify::format_result(r).c_str());
    std::fflush(stdout);
    if (!r.passed && !r.skipped) ++failed;
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
