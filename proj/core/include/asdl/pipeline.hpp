#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asdl/geometry.hpp"
#include "asdl/metrics.hpp"
#include "asdl/model.hpp"
#include "asdl/sim.hpp"
#include "asdl/train.hpp"

namespace asdl {

enum class Stage { simulate, extract, train, evaluate, plot };

std::string to_string(Stage stage);
std::vector<Stage> parse_stages(const std::string& csv);

// Everything one reproducible run needs: rig, corpus recipe, model and
// training hyper-parameters, metric options, output directory and the master
// seed (propagated to every seeded component).
struct RunConfig {
  std::string rig_path = "default";  // "default" or a rig file path
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  CorpusOptions corpus;
  ModelConfig model;
  TrainConfig train;
  MetricsOptions metrics;
};

// Parses a run config file, rejecting unknown sections and keys. Optional
// overrides replace the file's seed/output directory (command line flags).
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);
void apply_seed_override(RunConfig& cfg, std::uint64_t seed);

RigConfig resolve_rig(const RunConfig& cfg);

// Executes the requested stages in canonical order. Each stage writes its
// artifacts under the output directory plus a manifest with its input hash;
// re-runs with unchanged inputs are skipped. Throws ConfigError/DataError.
void run_pipeline(const RunConfig& cfg, const std::vector<Stage>& stages);

// Scores an external prediction file against a label file and returns the
// full metrics report.
MetricsReport score_predictions(const std::filesystem::path& pred_file,
                                const std::filesystem::path& label_file,
                                const MetricsOptions& options);

// Best-effort conversion of a Tragic Talkers style directory tree into the
// internal corpus layout. Malformed sequences are skipped with a warning;
// zero usable sequences is an error.
CorpusManifest ingest_tragic_talkers(const std::filesystem::path& root,
                                     const std::filesystem::path& out_dir,
                                     double image_width_px = 2448.0);

// Standalone PR plot from a pr_curve.csv file.
void plot_pr_csv(const std::filesystem::path& curve_csv, const std::filesystem::path& svg_path);

}  // namespace asdl
