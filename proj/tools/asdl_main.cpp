// asdl - simulate, extract, train, evaluate and score active speaker
// detection and localization runs from the command line.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "asdl/errors.hpp"
#include "asdl/geometry.hpp"
#include "asdl/metrics.hpp"
#include "asdl/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

asdl::RunConfig resolve_config(const GlobalOptions& global) {
  if (global.config_path.empty()) {
    throw asdl::ConfigError("this command needs --config <file>");
  }
  asdl::RunConfig cfg = asdl::load_run_config(global.config_path);
  if (global.seed) asdl::apply_seed_override(cfg, *global.seed);
  if (global.out_dir) cfg.out_dir = *global.out_dir;
  return cfg;
}

int run_stages(const GlobalOptions& global, const std::vector<asdl::Stage>& stages) {
  asdl::run_pipeline(resolve_config(global), stages);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual active speaker detection and localization pipeline"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--config", global.config_path, "Run configuration file");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed override");
  std::string out_value;
  auto* out_opt = app.add_option("--out", out_value, "Output directory override");

  auto* cmd_simulate = app.add_subcommand("simulate", "Render the synthetic corpus");
  auto* cmd_extract = app.add_subcommand("extract", "Compute feature tensors for the corpus");
  auto* cmd_train = app.add_subcommand("train", "Train the model on extracted features");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "Run inference and the metric suite");
  auto* cmd_plot = app.add_subcommand("plot", "Render the precision-recall curve as SVG");
  std::string plot_curve, plot_out = "pr_curve.svg";
  cmd_plot->add_option("--curve", plot_curve, "Standalone mode: pr_curve.csv to plot");
  cmd_plot->add_option("--svg", plot_out, "Standalone mode: output SVG path");

  auto* cmd_run = app.add_subcommand("run", "Run several stages in order");
  std::string stages_csv = "simulate,extract,train,evaluate,plot";
  cmd_run->add_option("--stages", stages_csv, "Comma-separated stage list");

  auto* cmd_score = app.add_subcommand("score", "Score a prediction file against labels");
  std::string score_pred, score_labels, score_report;
  double score_tolerance = 89.0;
  double score_width = 2448.0;
  int score_thresholds = 101;
  double score_op = 0.5;
  cmd_score->add_option("--pred", score_pred, "Prediction CSV")->required();
  cmd_score->add_option("--labels", score_labels, "Label CSV")->required();
  cmd_score->add_option("--tolerance-px", score_tolerance, "Spatial tolerance in pixels");
  cmd_score->add_option("--image-width", score_width, "Image width in pixels");
  cmd_score->add_option("--thresholds", score_thresholds, "Sigmoid threshold count");
  cmd_score->add_option("--op-threshold", score_op, "Operating threshold for aD / DetErr");
  cmd_score->add_option("--report", score_report, "Also write the full JSON report here");

  auto* cmd_ingest = app.add_subcommand("ingest", "Convert a Tragic Talkers style tree");
  std::string ingest_root, ingest_out;
  double ingest_width = 2448.0;
  cmd_ingest->add_option("--root", ingest_root, "Dataset root directory")->required();
  cmd_ingest->add_option("--out-dir", ingest_out, "Corpus output directory")->required();
  cmd_ingest->add_option("--image-width", ingest_width, "Image width in pixels");

  auto* cmd_rig = app.add_subcommand("rig", "Write the default rig configuration");
  std::string rig_out = "rig.kv";
  cmd_rig->add_option("--out-file", rig_out, "Destination file");

  CLI11_PARSE(app, argc, argv);

  if (seed_opt->count() > 0) global.seed = seed_value;
  if (out_opt->count() > 0) global.out_dir = out_value;

  try {
    if (cmd_simulate->parsed()) return run_stages(global, {asdl::Stage::simulate});
    if (cmd_extract->parsed()) return run_stages(global, {asdl::Stage::extract});
    if (cmd_train->parsed()) return run_stages(global, {asdl::Stage::train});
    if (cmd_evaluate->parsed()) return run_stages(global, {asdl::Stage::evaluate});
    if (cmd_plot->parsed()) {
      if (!plot_curve.empty()) {
        asdl::plot_pr_csv(plot_curve, plot_out);
        std::cout << "wrote " << plot_out << "\n";
        return kExitOk;
      }
      return run_stages(global, {asdl::Stage::plot});
    }
    if (cmd_run->parsed()) return run_stages(global, asdl::parse_stages(stages_csv));
    if (cmd_score->parsed()) {
      asdl::MetricsOptions options;
      options.tolerance_px = score_tolerance;
      options.image_width_px = score_width;
      options.n_thresholds = score_thresholds;
      options.operating_threshold = score_op;
      const asdl::MetricsReport report =
          asdl::score_predictions(score_pred, score_labels, options);
      std::cout << asdl::format_report_row(report) << "\n";
      if (!score_report.empty()) asdl::save_report_json(score_report, report);
      return kExitOk;
    }
    if (cmd_ingest->parsed()) {
      const auto manifest = asdl::ingest_tragic_talkers(ingest_root, ingest_out, ingest_width);
      std::cout << "ingested " << manifest.scenes.size() << " sequences into " << ingest_out
                << "\n";
      return kExitOk;
    }
    if (cmd_rig->parsed()) {
      asdl::save_rig(rig_out, asdl::build_default_rig());
      std::cout << "wrote " << rig_out << "\n";
      return kExitOk;
    }
  } catch (const asdl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asdl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
