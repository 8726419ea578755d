#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "binadapt/autobin.hpp"

namespace binadapt::cli {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

// Invalid configuration file, key, value or flag.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::filesystem::path source_dir;
  std::filesystem::path target_dir;
  std::filesystem::path out_dir;
  std::size_t patch_h = 32;
  std::size_t patch_w = 32;
  std::size_t depth = 3;
  std::size_t filters = 8;
  double dropout = 0.2;
  std::size_t epochs = 50;
  std::size_t batch = 8;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double lambda0 = 0.1;
  double lambda_inc = 0.01;
  double h_prec = 0.1;
  double rho_th = 0.25;
  double sweep_step = 0.05;
  double validation_fraction = 0.25;

  SaeConfig model() const;
  TrainConfig training() const;
  AutoBinConfig autobin() const;
  // Throws ConfigError when any value breaks a module invariant.
  void validate() const;
};

// key=value lines; '#' starts a comment; blank lines are ignored. Relative
// paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// One key=value line per field in a fixed order; the input to the config hash.
std::string canonical_config(const ExperimentConfig& cfg);
// 16 hex digits of FNV-1a over canonical_config.
std::string config_hash(const ExperimentConfig& cfg);

int cmd_train_sae(const ExperimentConfig& cfg, std::ostream& log);
int cmd_predict(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                const std::filesystem::path& input, double threshold_override, std::ostream& log);
int cmd_similarity(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                   std::ostream& log);
int cmd_run(const ExperimentConfig& cfg, std::ostream& log);
int cmd_synth(std::uint64_t seed, const std::filesystem::path& out_dir, std::ostream& log);

// Parses argv, dispatches, and maps exceptions to exit codes with a one-line
// "error: <category>: <message>" on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace binadapt::cli
