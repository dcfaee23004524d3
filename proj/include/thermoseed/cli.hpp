#pragma once
// Command-line front end: one subcommand per pipeline stage, all paths
// resolved against --workdir, every output directory carrying its resolved
// config and content hash.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "thermoseed/kvfile.hpp"
#include "thermoseed/nn.hpp"
#include "thermoseed/timeseries.hpp"
#include "thermoseed/training.hpp"

namespace thermoseed::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or consistency failure
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string data = "data";  // dataset directory written by `generate`
  std::string output = "runs";
  std::string model = "pcnn";  // pcnn | lstm
  // Preprocessing toggles.
  bool delete_streaks = true;
  bool clip = true;
  bool smooth = true;
  bool interpolate = true;
  training::WindowConfig windows;
  nn::NetConfig net;
  int epochs = 20;
  std::size_t batch = 16;
  double base_lr = 1e-3;
  bool include_warm_loss = false;
  std::uint64_t seed = 0;  // single-run commands
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

KeyValueFile config_to_kv(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_kv(const KeyValueFile& kv);
std::string config_hash(const RunConfig& c);

// `config.cfg` (with the hash inside) in dir.
void write_resolved_config(const RunConfig& c, const std::filesystem::path& dir);

// Dataset plus experiment preparation under the config's toggles. Room flows
// and site geometry come from the dataset's scenario.cfg.
struct LoadedData {
  training::Experiment experiment;
  training::SiteGeometry site;
};
LoadedData load_experiment(const RunConfig& c, const std::filesystem::path& data_dir);

int run(int argc, const char* const* argv);

}  // namespace thermoseed::cli
