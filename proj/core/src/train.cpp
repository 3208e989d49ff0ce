#include "asdl/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "asdl/errors.hpp"
#include "asdl/rng.hpp"

namespace asdl {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (cfg.lr_initial <= 0.0) throw ConfigError("lr_initial must be positive");
  if (cfg.lr_flat_epochs < 0 || cfg.lr_flat_epochs > cfg.epochs) {
    throw ConfigError("lr_flat_epochs must lie in [0, epochs]");
  }
  if (cfg.lr_decay <= 0.0 || cfg.lr_decay > 1.0) {
    throw ConfigError("lr_decay must lie in (0, 1]");
  }
  if (cfg.folds < 1) throw ConfigError("folds must be positive");
}

void train_config_to_section(const TrainConfig& cfg, KeyValueSection& section) {
  section.set_int("epochs", cfg.epochs);
  section.set_int("batch_size", cfg.batch_size);
  section.set_double("lr_initial", cfg.lr_initial);
  section.set_int("lr_flat_epochs", cfg.lr_flat_epochs);
  section.set_double("lr_decay", cfg.lr_decay);
  section.set_uint64("seed", cfg.seed);
  section.set_int("folds", cfg.folds);
  section.set_bool("store_params_f32", cfg.store_params_f32);
}

TrainConfig train_config_from_section(const KeyValueSection& section) {
  section.reject_unknown_keys({"epochs", "batch_size", "lr_initial", "lr_flat_epochs", "lr_decay",
                               "seed", "folds", "store_params_f32"});
  TrainConfig defaults;
  TrainConfig cfg;
  cfg.epochs = static_cast<int>(section.get_int("epochs", defaults.epochs));
  cfg.batch_size = static_cast<int>(section.get_int("batch_size", defaults.batch_size));
  cfg.lr_initial = section.get_double("lr_initial", defaults.lr_initial);
  cfg.lr_flat_epochs = static_cast<int>(section.get_int("lr_flat_epochs", defaults.lr_flat_epochs));
  cfg.lr_decay = section.get_double("lr_decay", defaults.lr_decay);
  cfg.seed = section.get_uint64("seed", defaults.seed);
  cfg.folds = static_cast<int>(section.get_int("folds", defaults.folds));
  cfg.store_params_f32 = section.get_bool("store_params_f32", defaults.store_params_f32);
  validate_train_config(cfg);
  return cfg;
}

double segment_loss(const std::vector<FrameOutput>& pred, const BatchTarget& target) {
  const std::size_t n = pred.size();
  if (target.x_target.size() != n || target.active_mask.size() != n) {
    throw DataError("loss: prediction and target lengths differ");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c_hat = target.active_mask[i] ? 1.0 : 0.0;
    if (!std::isfinite(pred[i].x_pred) || !std::isfinite(pred[i].confidence)) {
      throw DataError("loss: non-finite prediction at frame " + std::to_string(i));
    }
    if (target.active_mask[i]) {
      if (!std::isfinite(target.x_target[i])) {
        throw DataError("loss: active frame " + std::to_string(i) + " lacks a position target");
      }
      const double dx = pred[i].x_pred - target.x_target[i];
      loss += dx * dx;
    }
    const double dc = pred[i].confidence - c_hat;
    loss += dc * dc;
  }
  return loss;
}

std::vector<FrameOutput> segment_loss_grad(const std::vector<FrameOutput>& pred,
                                           const BatchTarget& target) {
  const std::size_t n = pred.size();
  if (target.x_target.size() != n || target.active_mask.size() != n) {
    throw DataError("loss: prediction and target lengths differ");
  }
  std::vector<FrameOutput> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c_hat = target.active_mask[i] ? 1.0 : 0.0;
    grad[i].x_pred = target.active_mask[i] ? 2.0 * (pred[i].x_pred - target.x_target[i]) : 0.0;
    grad[i].confidence = 2.0 * (pred[i].confidence - c_hat);
  }
  return grad;
}

double lr_schedule(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::invalid_argument("epoch out of range for the schedule");
  }
  if (epoch < cfg.lr_flat_epochs) return cfg.lr_initial;
  return cfg.lr_initial * std::pow(cfg.lr_decay, epoch - cfg.lr_flat_epochs + 1);
}

std::vector<std::vector<std::string>> split_folds(const std::vector<std::string>& sequence_ids,
                                                  int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be positive");
  if (sequence_ids.empty() || sequence_ids.size() % static_cast<std::size_t>(k) != 0) {
    throw ConfigError("sequence count must be divisible by the fold count");
  }
  std::vector<std::string> shuffled = sequence_ids;
  Rng rng(derive_seed(seed, "folds"));
  rng.shuffle(shuffled);
  const std::size_t per_fold = shuffled.size() / static_cast<std::size_t>(k);
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    folds[i / per_fold].push_back(shuffled[i]);
  }
  return folds;
}

std::vector<TrainingSegment> load_segments(const std::filesystem::path& corpus_dir,
                                           const CorpusManifest& manifest,
                                           const std::string& split,
                                           const std::filesystem::path& features_dir,
                                           const ModelConfig& model_cfg) {
  const int frames_per_segment = model_cfg.output_frames();
  std::vector<TrainingSegment> segments;
  for (const SceneEntry* scene : manifest.split(split)) {
    const auto labels = read_labels(corpus_dir / scene->labels_path);
    const Tensor visual = read_tensor(corpus_dir / scene->visual_path);
    if (visual.ndim() != 3 || visual.dim(0) != model_cfg.n_cameras) {
      throw DataError("scene " + scene->scene_id + ": visual tensor does not match the camera count");
    }
    const int n_cams = model_cfg.n_cameras;
    const int n_frames = scene->n_frames;
    const int n_segments = n_frames / frames_per_segment;

    // Index labels as [frame][camera].
    std::vector<std::vector<const FrameLabel*>> by_frame(
        static_cast<std::size_t>(n_frames),
        std::vector<const FrameLabel*>(static_cast<std::size_t>(n_cams), nullptr));
    for (const auto& l : labels) {
      if (l.frame_index < 0 || l.frame_index >= n_frames || l.camera_id < 0 ||
          l.camera_id >= n_cams) {
        throw DataError("scene " + scene->scene_id + ": label outside the frame/camera grid");
      }
      by_frame[static_cast<std::size_t>(l.frame_index)][static_cast<std::size_t>(l.camera_id)] = &l;
    }

    for (int s = 0; s < n_segments; ++s) {
      TrainingSegment seg;
      seg.scene_id = scene->scene_id;
      seg.segment_index = s;
      const std::string blob =
          scene->scene_id + "_seg" + std::to_string(s) + ".tensor";
      seg.features = read_tensor(features_dir / blob);
      if (seg.features.ndim() != 3 || seg.features.dim(0) != model_cfg.input_channels ||
          seg.features.dim(1) != model_cfg.input_time_bins ||
          seg.features.dim(2) != model_cfg.input_freq_bins) {
        throw DataError("feature blob " + blob + " does not match the model input shape");
      }

      seg.visual = Tensor({n_cams, frames_per_segment, visual.dim(2)});
      seg.active.assign(static_cast<std::size_t>(frames_per_segment), 0);
      seg.x_target.assign(static_cast<std::size_t>(n_cams),
                          std::vector<double>(static_cast<std::size_t>(frames_per_segment),
                                              std::numeric_limits<double>::quiet_NaN()));
      for (int f = 0; f < frames_per_segment; ++f) {
        const int frame = s * frames_per_segment + f;
        for (int cam = 0; cam < n_cams; ++cam) {
          const FrameLabel* l = by_frame[static_cast<std::size_t>(frame)][static_cast<std::size_t>(cam)];
          if (!l) {
            throw DataError("scene " + scene->scene_id + ": missing label for frame " +
                            std::to_string(frame) + " camera " + std::to_string(cam));
          }
          if (cam == 0) seg.active[static_cast<std::size_t>(f)] = l->active ? 1 : 0;
          if (l->has_center) {
            seg.x_target[static_cast<std::size_t>(cam)][static_cast<std::size_t>(f)] =
                l->x_center_norm;
          }
          for (std::int64_t col = 0; col < visual.dim(2); ++col) {
            seg.visual.at3(cam, f, col) = visual.at3(cam, frame, col);
          }
        }
      }
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

BatchTarget make_target(const TrainingSegment& segment, int camera, int n_cameras) {
  BatchTarget target;
  const std::size_t n = segment.active.size();
  target.x_target = segment.x_target[static_cast<std::size_t>(camera)];
  target.active_mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) target.active_mask[i] = segment.active[i] != 0;
  target.camera_onehot.assign(static_cast<std::size_t>(n_cameras), 0.0);
  target.camera_onehot[static_cast<std::size_t>(camera)] = 1.0;
  return target;
}

Tensor visual_view(const TrainingSegment& segment, int camera) {
  const std::int64_t frames = segment.visual.dim(1);
  const std::int64_t cols = segment.visual.dim(2);
  Tensor view({frames, cols});
  for (std::int64_t f = 0; f < frames; ++f) {
    for (std::int64_t c = 0; c < cols; ++c) {
      view.at2(f, c) = segment.visual.at3(camera, f, c);
    }
  }
  return view;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history: " + path.string());
  out << "epoch,lr,train_loss,val_loss\n";
  for (const auto& h : history) {
    out << h.epoch << "," << format_double(h.lr) << "," << format_double(h.train_loss) << ","
        << format_double(h.val_loss) << "\n";
  }
}

AdamOptimizer::AdamOptimizer(ParamStore& store, double beta1, double beta2, double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.value.shape);
    v_.emplace_back(e.value.shape);
  }
}

void AdamOptimizer::step(double lr, double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& entries = store_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    auto& value = entries[i].value.data;
    const auto& grad = entries[i].grad.data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j] * grad_scale;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

namespace {

double evaluate_loss(Model& model, const std::vector<TrainingSegment>& set, int camera) {
  if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& seg : set) {
    const BatchTarget target = make_target(seg, camera, model.config().n_cameras);
    const auto pred = model.forward(seg.features, visual_view(seg, camera), target.camera_onehot,
                                    /*training=*/false);
    total += segment_loss(pred, target);
  }
  return total / static_cast<double>(set.size());
}

}  // namespace

std::vector<EpochStats> train_model(Model& model, const TrainConfig& cfg,
                                    const std::vector<TrainingSegment>& train_set,
                                    const std::vector<TrainingSegment>& val_set) {
  validate_train_config(cfg);
  if (train_set.empty()) throw DataError("training set is empty");
  const int n_cams = model.config().n_cameras;

  if (cfg.store_params_f32) model.params().round_to_f32();
  AdamOptimizer adam(model.params());
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg, epoch);

    Rng order_rng(derive_seed(cfg.seed, "epoch_order_" + std::to_string(epoch)));
    order_rng.shuffle(order);
    Rng cam_rng(derive_seed(cfg.seed, "epoch_cam_" + std::to_string(epoch)));
    std::vector<int> cameras(train_set.size());
    for (auto& c : cameras) c = static_cast<int>(cam_rng.uniform_index(static_cast<std::uint64_t>(n_cams)));

    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - done);
      model.params().zero_grads();
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t idx = order[done + b];
        const auto& seg = train_set[idx];
        const int camera = cameras[idx];
        const BatchTarget target = make_target(seg, camera, n_cams);
        const auto pred = model.forward(seg.features, visual_view(seg, camera),
                                        target.camera_onehot, /*training=*/true);
        const double loss = segment_loss(pred, target);
        if (!std::isfinite(loss)) {
          throw DataError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                          ", segment " + seg.scene_id);
        }
        epoch_loss += loss;
        model.backward(segment_loss_grad(pred, target));
      }
      adam.step(lr, 1.0 / static_cast<double>(batch));
      if (cfg.store_params_f32) model.params().round_to_f32();
      done += batch;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    stats.val_loss = evaluate_loss(model, val_set, n_cams / 2);
    history.push_back(stats);
  }
  return history;
}

std::vector<EpochStats> train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                              const std::filesystem::path& corpus_dir,
                              const std::filesystem::path& features_dir,
                              const std::filesystem::path& out_dir) {
  const CorpusManifest manifest = load_manifest(corpus_dir / "manifest.tsv");
  const auto train_set = load_segments(corpus_dir, manifest, "train", features_dir, model_cfg);
  const auto val_set = load_segments(corpus_dir, manifest, "test", features_dir, model_cfg);
  if (train_set.empty()) throw DataError("corpus has no training segments");

  Model model(model_cfg);
  const auto history = train_model(model, train_cfg, train_set, val_set);

  std::filesystem::create_directories(out_dir);
  write_history_csv(out_dir / "history.csv", history);
  save_checkpoint(out_dir / "checkpoint.bin", model,
                  train_cfg.store_params_f32 ? Dtype::f32 : Dtype::f64);
  return history;
}

// ----------------------------------------------------------------------- //
// Gradient verification

ModelConfig micro_model_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.conv_blocks = 2;
  cfg.base_channels = 4;
  cfg.conformer_layers = 1;
  cfg.attention_heads = 2;
  cfg.depthwise_kernel = 5;
  cfg.ffn_hidden = 16;
  cfg.embed_dim = 8;
  cfg.seed = seed;
  cfg.input_channels = 16;
  cfg.input_time_bins = 32;
  cfg.input_freq_bins = 16;
  cfg.visual_columns = 16;
  cfg.max_relative_offset = 16;
  return cfg;
}

GradCheckSample make_grad_check_sample(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "grad_check_sample"));
  GradCheckSample sample;
  sample.features = Tensor({cfg.input_channels, cfg.input_time_bins, cfg.input_freq_bins});
  for (double& v : sample.features.data) v = rng.normal();
  const int obs_dim = cfg.visual_backbone == VisualBackboneKind::toy_conv ? cfg.visual_columns
                                                                          : cfg.external_dim;
  sample.visual = Tensor({cfg.output_frames(), obs_dim});
  for (double& v : sample.visual.data) v = rng.normal();
  sample.camera_onehot.assign(static_cast<std::size_t>(cfg.n_cameras), 0.0);
  sample.camera_onehot[rng.uniform_index(static_cast<std::uint64_t>(cfg.n_cameras))] = 1.0;

  const int frames = cfg.output_frames();
  sample.target.x_target.resize(static_cast<std::size_t>(frames));
  sample.target.active_mask.resize(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    const bool active = rng.uniform() < 0.6;
    sample.target.active_mask[static_cast<std::size_t>(f)] = active;
    sample.target.x_target[static_cast<std::size_t>(f)] =
        active ? rng.uniform() : std::numeric_limits<double>::quiet_NaN();
  }
  sample.target.camera_onehot = sample.camera_onehot;
  return sample;
}

double gradient_check(const ModelConfig& cfg, const GradCheckSample& sample, int n_params,
                      std::uint64_t seed) {
  Model model(cfg);

  auto loss_now = [&]() {
    const auto pred =
        model.forward(sample.features, sample.visual, sample.camera_onehot, /*training=*/true);
    return segment_loss(pred, sample.target);
  };

  model.params().zero_grads();
  const auto pred =
      model.forward(sample.features, sample.visual, sample.camera_onehot, /*training=*/true);
  model.backward(segment_loss_grad(pred, sample.target));

  // Snapshot analytic gradients before the finite-difference passes.
  std::vector<Tensor> analytic;
  analytic.reserve(model.params().entries().size());
  for (const auto& e : model.params().entries()) analytic.push_back(e.grad);

  // Uniformly sample trainable scalar parameters.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
    const auto& e = model.params().entries()[i];
    if (!e.trainable) continue;
    for (std::size_t j = 0; j < e.value.data.size(); ++j) coords.emplace_back(i, j);
  }
  Rng rng(derive_seed(seed, "grad_check_pick"));
  const int samples = std::min<int>(n_params, static_cast<int>(coords.size()));

  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const auto [ei, ej] = coords[rng.uniform_index(coords.size())];
    auto& slot = model.params().entries()[ei].value.data[ej];
    const double saved = slot;
    slot = saved + kStep;
    const double up = loss_now();
    slot = saved - kStep;
    const double down = loss_now();
    slot = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double an = analytic[ei].data[ej];
    const double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-3);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace asdl
