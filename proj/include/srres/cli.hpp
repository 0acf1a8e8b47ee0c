#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "srres/evaluation.hpp"
#include "srres/image.hpp"

namespace srres::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kFailure = 2 };

/// Dispatches a verb. `args` excludes the program name. Data goes to named
/// files; logs and usage text go to `err`, help text to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// PNG files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

/// A paired dataset lives in `<root>/hr/` and `<root>/lr/` with matching
/// file names.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<Image> lr;
  std::vector<Image> hr;
};

Dataset load_dataset(const std::filesystem::path& root);
/// Writes `<root>/{hr,lr}/NNNN.png`.
void save_dataset(const std::filesystem::path& root, const std::vector<SamplePair>& pairs);

}  // namespace srres::cli
