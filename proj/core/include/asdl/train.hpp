#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asdl/keyvalue.hpp"
#include "asdl/model.hpp"
#include "asdl/sim.hpp"
#include "asdl/tensor.hpp"

namespace asdl {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr_initial = 1e-4;
  int lr_flat_epochs = 30;     // learning rate held flat, then decayed
  double lr_decay = 0.9;       // per-epoch factor after the flat phase
  std::uint64_t seed = 0;
  int folds = 5;
  bool store_params_f32 = true;  // training-mode parameter storage
};

void validate_train_config(const TrainConfig& cfg);
void train_config_to_section(const TrainConfig& cfg, KeyValueSection& section);
TrainConfig train_config_from_section(const KeyValueSection& section);

// Per-segment regression/activity targets for one camera view.
struct BatchTarget {
  std::vector<double> x_target;     // defined (finite) wherever the mask is true
  std::vector<bool> active_mask;    // voice activity per frame
  std::vector<double> camera_onehot;
};

// Sum over frames of mask * (x - x_target)^2 + (confidence - activity)^2.
// Silent frames contribute only the confidence term.
double segment_loss(const std::vector<FrameOutput>& pred, const BatchTarget& target);

// dLoss/d(x_pred, confidence) per frame.
std::vector<FrameOutput> segment_loss_grad(const std::vector<FrameOutput>& pred,
                                           const BatchTarget& target);

// Flat for the first lr_flat_epochs, then multiplied by lr_decay each epoch.
double lr_schedule(const TrainConfig& cfg, int epoch);

// Deterministic partition of sequence ids into k equal validation folds.
std::vector<std::vector<std::string>> split_folds(const std::vector<std::string>& sequence_ids,
                                                  int k, std::uint64_t seed);

// One 2-second training example: audio features plus per-camera visual
// observations and targets.
struct TrainingSegment {
  std::string scene_id;
  int segment_index = 0;
  Tensor features;             // [channels, time, freq]
  Tensor visual;               // [n_cameras, frames, columns]
  std::vector<std::uint8_t> active;        // [frames]
  std::vector<std::vector<double>> x_target;  // [camera][frames], NaN when absent
};

// Loads the segments of one split, pairing extracted feature blobs (written
// by the extract stage under features_dir) with corpus labels and visuals.
std::vector<TrainingSegment> load_segments(const std::filesystem::path& corpus_dir,
                                           const CorpusManifest& manifest,
                                           const std::string& split,
                                           const std::filesystem::path& features_dir,
                                           const ModelConfig& model_cfg);

BatchTarget make_target(const TrainingSegment& segment, int camera, int n_cameras);
Tensor visual_view(const TrainingSegment& segment, int camera);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);

// Adam with mean-over-batch gradients. Moments are kept in full precision;
// parameter values are rounded to float32 after each step when the train
// config asks for 32-bit storage.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);

  void step(double lr, double grad_scale);

 private:
  ParamStore* store_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Epoch loop: seeded shuffling, one uniformly sampled camera view per
// segment per epoch, Adam updates, per-epoch train/validation loss.
// Throws DataError on divergence (non-finite loss).
std::vector<EpochStats> train_model(Model& model, const TrainConfig& cfg,
                                    const std::vector<TrainingSegment>& train_set,
                                    const std::vector<TrainingSegment>& val_set);

// Full training entry point: loads both splits, trains, writes history.csv
// and checkpoint.bin under out_dir.
std::vector<EpochStats> train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                              const std::filesystem::path& corpus_dir,
                              const std::filesystem::path& features_dir,
                              const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------- //
// Gradient verification

struct GradCheckSample {
  Tensor features;
  Tensor visual;
  std::vector<double> camera_onehot;
  BatchTarget target;
};

// Small configuration for finite-difference work: 2 conv blocks on a
// 16x32x16 input, 8-frame output.
ModelConfig micro_model_config(std::uint64_t seed = 0);

GradCheckSample make_grad_check_sample(const ModelConfig& cfg, std::uint64_t seed);

// Compares analytic parameter gradients of the segment loss against central
// finite differences (step 1e-5) on `n_params` sampled parameters; returns
// the worst relative error.
double gradient_check(const ModelConfig& cfg, const GradCheckSample& sample, int n_params = 200,
                      std::uint64_t seed = 0);

}  // namespace asdl
