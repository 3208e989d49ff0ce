#include "asdl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "asdl/errors.hpp"
#include "asdl/features.hpp"
#include "asdl/hash.hpp"
#include "asdl/keyvalue.hpp"

namespace asdl {

namespace {

namespace fs = std::filesystem;

void corpus_options_to_section(const CorpusOptions& o, KeyValueSection& sec) {
  sec.set_int("n_scenes", o.n_scenes);
  sec.set_double("duration_s", o.duration_s);
  sec.set_double("azimuth_abs_min_deg", o.azimuth_abs_min_deg);
  sec.set_double("azimuth_abs_max_deg", o.azimuth_abs_max_deg);
  sec.set_double("distance_min_m", o.distance_min_m);
  sec.set_double("distance_max_m", o.distance_max_m);
  sec.set_double("moving_fraction", o.moving_fraction);
  sec.set_double("occlusion_fraction", o.occlusion_fraction);
  sec.set_double("snr_db", o.snr_db);
  sec.set_int("visual_columns", o.visual_columns);
}

CorpusOptions corpus_options_from_section(const KeyValueSection& sec) {
  sec.reject_unknown_keys({"n_scenes", "duration_s", "azimuth_abs_min_deg", "azimuth_abs_max_deg",
                           "distance_min_m", "distance_max_m", "moving_fraction",
                           "occlusion_fraction", "snr_db", "visual_columns"});
  CorpusOptions defaults;
  CorpusOptions o;
  o.n_scenes = static_cast<int>(sec.get_int("n_scenes", defaults.n_scenes));
  o.duration_s = sec.get_double("duration_s", defaults.duration_s);
  o.azimuth_abs_min_deg = sec.get_double("azimuth_abs_min_deg", defaults.azimuth_abs_min_deg);
  o.azimuth_abs_max_deg = sec.get_double("azimuth_abs_max_deg", defaults.azimuth_abs_max_deg);
  o.distance_min_m = sec.get_double("distance_min_m", defaults.distance_min_m);
  o.distance_max_m = sec.get_double("distance_max_m", defaults.distance_max_m);
  o.moving_fraction = sec.get_double("moving_fraction", defaults.moving_fraction);
  o.occlusion_fraction = sec.get_double("occlusion_fraction", defaults.occlusion_fraction);
  o.snr_db = sec.get_double("snr_db", defaults.snr_db);
  o.visual_columns = static_cast<int>(sec.get_int("visual_columns", defaults.visual_columns));
  return o;
}

void metrics_options_to_section(const MetricsOptions& o, KeyValueSection& sec) {
  sec.set_double("tolerance_px", o.tolerance_px);
  sec.set_int("n_thresholds", o.n_thresholds);
  sec.set_double("image_width_px", o.image_width_px);
  sec.set_double("operating_threshold", o.operating_threshold);
}

MetricsOptions metrics_options_from_section(const KeyValueSection& sec) {
  sec.reject_unknown_keys({"tolerance_px", "n_thresholds", "image_width_px",
                           "operating_threshold"});
  MetricsOptions defaults;
  MetricsOptions o;
  o.tolerance_px = sec.get_double("tolerance_px", defaults.tolerance_px);
  o.n_thresholds = static_cast<int>(sec.get_int("n_thresholds", defaults.n_thresholds));
  o.image_width_px = sec.get_double("image_width_px", defaults.image_width_px);
  o.operating_threshold = sec.get_double("operating_threshold", defaults.operating_threshold);
  return o;
}

struct StageManifest {
  std::string stage;
  std::string inputs_hash;
  std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
  double wall_time_s = 0.0;
};

fs::path manifest_path(const RunConfig& cfg, Stage stage) {
  return cfg.out_dir / (to_string(stage) + ".manifest.json");
}

void write_stage_manifest(const fs::path& path, const StageManifest& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["inputs_hash"] = m.inputs_hash;
  auto outputs = nlohmann::ordered_json::array();
  for (const auto& [p, h] : m.outputs) {
    outputs.push_back({{"path", p}, {"hash", h}});
  }
  j["outputs"] = std::move(outputs);
  j["wall_time_s"] = m.wall_time_s;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write stage manifest: " + path.string());
  out << j.dump(2) << "\n";
}

// A stage is up to date when its manifest exists, the input hash matches and
// every recorded output still exists with the recorded content.
bool stage_up_to_date(const RunConfig& cfg, Stage stage, const std::string& inputs_hash) {
  const fs::path path = manifest_path(cfg, stage);
  if (!fs::exists(path)) return false;
  try {
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    if (j.at("inputs_hash").get<std::string>() != inputs_hash) return false;
    for (const auto& o : j.at("outputs")) {
      const fs::path out_file = cfg.out_dir / o.at("path").get<std::string>();
      if (!fs::exists(out_file)) return false;
      if (hash_hex(hash_file(out_file)) != o.at("hash").get<std::string>()) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

std::string rig_text(const RigConfig& rig) {
  const fs::path tmp = fs::temp_directory_path() / "asdl_rig_hash.kv";
  save_rig(tmp, rig);
  std::ifstream in(tmp);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string hash_inputs(const std::vector<std::string>& parts) {
  Fnv1a64 h;
  for (const auto& p : parts) {
    h.update(p);
    h.update("\x1f", 1);
  }
  return hash_hex(h.value());
}

std::string section_text(const std::string& name,
                         const std::function<void(KeyValueSection&)>& fill) {
  KeyValueFile kv;
  auto& sec = kv.add_section(name);
  fill(sec);
  return kv.serialize();
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void finish_stage(const RunConfig& cfg, Stage stage, const std::string& inputs_hash,
                  const std::vector<fs::path>& outputs, const StageTimer& timer) {
  StageManifest m;
  m.stage = to_string(stage);
  m.inputs_hash = inputs_hash;
  for (const auto& p : outputs) {
    m.outputs.emplace_back(fs::relative(p, cfg.out_dir).generic_string(),
                           hash_hex(hash_file(p)));
  }
  m.wall_time_s = timer.seconds();
  write_stage_manifest(manifest_path(cfg, stage), m);
}

std::vector<fs::path> corpus_output_files(const RunConfig& cfg, const CorpusManifest& manifest) {
  std::vector<fs::path> files;
  const fs::path corpus_dir = cfg.out_dir / "corpus";
  files.push_back(corpus_dir / "manifest.tsv");
  for (const auto& s : manifest.scenes) {
    files.push_back(corpus_dir / s.audio_path);
    files.push_back(corpus_dir / s.labels_path);
    files.push_back(corpus_dir / s.visual_path);
    files.push_back(corpus_dir / s.script_path);
  }
  return files;
}

std::string simulate_inputs_hash(const RunConfig& cfg, const RigConfig& rig) {
  CorpusOptions with_seed = cfg.corpus;
  return hash_inputs({section_text("simulate",
                                   [&](KeyValueSection& s) {
                                     corpus_options_to_section(with_seed, s);
                                     s.set_uint64("seed", with_seed.seed);
                                   }),
                      rig_text(rig)});
}

void stage_simulate(const RunConfig& cfg, const RigConfig& rig) {
  const std::string inputs = simulate_inputs_hash(cfg, rig);
  if (stage_up_to_date(cfg, Stage::simulate, inputs)) {
    std::cout << "[simulate] up to date, skipping\n";
    return;
  }
  StageTimer timer;
  const CorpusManifest manifest = generate_corpus(rig, cfg.corpus, cfg.out_dir / "corpus");
  finish_stage(cfg, Stage::simulate, inputs, corpus_output_files(cfg, manifest), timer);
  std::cout << "[simulate] wrote " << manifest.scenes.size() << " scenes\n";
}

std::string extract_inputs_hash(const RunConfig& cfg) {
  const fs::path manifest_file = cfg.out_dir / "corpus" / "manifest.tsv";
  if (!fs::exists(manifest_file)) {
    throw DataError("extract needs a corpus; run the simulate stage first");
  }
  std::vector<std::string> parts;
  parts.push_back(hash_hex(hash_file(manifest_file)));
  const CorpusManifest manifest = load_manifest(manifest_file);
  for (const auto& s : manifest.scenes) {
    parts.push_back(hash_hex(hash_file(cfg.out_dir / "corpus" / s.audio_path)));
  }
  parts.push_back(std::to_string(cfg.model.input_channels) + "x" +
                  std::to_string(cfg.model.input_time_bins) + "x" +
                  std::to_string(cfg.model.input_freq_bins));
  return hash_inputs(parts);
}

void stage_extract(const RunConfig& cfg, const RigConfig& rig) {
  const std::string inputs = extract_inputs_hash(cfg);
  if (stage_up_to_date(cfg, Stage::extract, inputs)) {
    std::cout << "[extract] up to date, skipping\n";
    return;
  }
  StageTimer timer;
  const fs::path corpus_dir = cfg.out_dir / "corpus";
  const fs::path features_dir = cfg.out_dir / "features";
  fs::create_directories(features_dir);
  const CorpusManifest manifest = load_manifest(corpus_dir / "manifest.tsv");

  std::vector<fs::path> outputs;
  int n_segments = 0;
  for (const auto& scene : manifest.scenes) {
    const MultichannelClip clip = read_wav(corpus_dir / scene.audio_path);
    const std::int64_t per_segment = kSegmentSamples;
    const int segments = static_cast<int>(clip.n_samples() / per_segment);
    for (int s = 0; s < segments; ++s) {
      MultichannelClip chunk;
      chunk.sample_rate = clip.sample_rate;
      chunk.channels.resize(clip.channels.size());
      for (std::size_t ch = 0; ch < clip.channels.size(); ++ch) {
        const auto begin = clip.channels[ch].begin() + s * per_segment;
        chunk.channels[ch].assign(begin, begin + per_segment);
      }
      const FeatureTensor features = assemble_features(chunk, rig);
      const fs::path blob =
          features_dir / (scene.scene_id + "_seg" + std::to_string(s) + ".tensor");
      write_tensor(blob, features.values, Dtype::f32);
      outputs.push_back(blob);
      ++n_segments;
    }
  }
  finish_stage(cfg, Stage::extract, inputs, outputs, timer);
  std::cout << "[extract] wrote " << n_segments << " feature blobs\n";
}

std::string train_inputs_hash(const RunConfig& cfg) {
  const fs::path extract_manifest = manifest_path(cfg, Stage::extract);
  if (!fs::exists(extract_manifest)) {
    throw DataError("train needs extracted features; run the extract stage first");
  }
  TrainConfig tcfg = cfg.train;
  ModelConfig mcfg = cfg.model;
  return hash_inputs({hash_hex(hash_file(extract_manifest)),
                      hash_hex(hash_file(cfg.out_dir / "corpus" / "manifest.tsv")),
                      section_text("model",
                                   [&](KeyValueSection& s) { model_config_to_section(mcfg, s); }),
                      section_text("train", [&](KeyValueSection& s) {
                        train_config_to_section(tcfg, s);
                      })});
}

void stage_train(const RunConfig& cfg) {
  const std::string inputs = train_inputs_hash(cfg);
  if (stage_up_to_date(cfg, Stage::train, inputs)) {
    std::cout << "[train] up to date, skipping\n";
    return;
  }
  StageTimer timer;
  const fs::path train_dir = cfg.out_dir / "train";
  const auto history = train(cfg.model, cfg.train, cfg.out_dir / "corpus",
                             cfg.out_dir / "features", train_dir);
  finish_stage(cfg, Stage::train, inputs,
               {train_dir / "checkpoint.bin", train_dir / "history.csv"}, timer);
  std::cout << "[train] " << history.size() << " epochs, final train loss "
            << (history.empty() ? 0.0 : history.back().train_loss) << "\n";
}

std::string evaluate_inputs_hash(const RunConfig& cfg) {
  const fs::path checkpoint = cfg.out_dir / "train" / "checkpoint.bin";
  if (!fs::exists(checkpoint)) {
    throw DataError("evaluate needs a checkpoint; run the train stage first");
  }
  MetricsOptions mo = cfg.metrics;
  return hash_inputs({hash_hex(hash_file(checkpoint)),
                      hash_hex(hash_file(cfg.out_dir / "corpus" / "manifest.tsv")),
                      section_text("metrics", [&](KeyValueSection& s) {
                        metrics_options_to_section(mo, s);
                      })});
}

void stage_evaluate(const RunConfig& cfg, const RigConfig& rig) {
  const std::string inputs = evaluate_inputs_hash(cfg);
  if (stage_up_to_date(cfg, Stage::evaluate, inputs)) {
    std::cout << "[evaluate] up to date, skipping\n";
    return;
  }
  StageTimer timer;
  const fs::path eval_dir = cfg.out_dir / "eval";
  fs::create_directories(eval_dir);

  auto model = load_checkpoint(cfg.out_dir / "train" / "checkpoint.bin");
  const CorpusManifest manifest = load_manifest(cfg.out_dir / "corpus" / "manifest.tsv");
  const auto test_set = load_segments(cfg.out_dir / "corpus", manifest, "test",
                                      cfg.out_dir / "features", model->config());
  if (test_set.empty()) throw DataError("evaluate: the corpus has no test segments");

  const int n_cams = model->config().n_cameras;
  const int frames = model->config().output_frames();

  std::vector<FramePrediction> preds;
  std::vector<FrameLabel> labels;
  std::int64_t base = 0;

  // Per-scene frame offsets keep (frame, camera) keys globally unique.
  std::string current_scene;
  const CorpusManifest corpus = manifest;
  std::vector<const SceneEntry*> test_scenes = corpus.split("test");
  auto scene_of = [&](const std::string& id) -> const SceneEntry* {
    for (const auto* s : test_scenes) {
      if (s->scene_id == id) return s;
    }
    throw DataError("segment references unknown scene " + id);
  };

  std::int64_t scene_base = 0;
  current_scene.clear();
  for (const auto& seg : test_set) {
    if (seg.scene_id != current_scene) {
      if (!current_scene.empty()) {
        scene_base += scene_of(current_scene)->n_frames;
      }
      current_scene = seg.scene_id;
    }
    base = scene_base + static_cast<std::int64_t>(seg.segment_index) * frames;

    // The scene's labels, re-keyed to global frame indices.
    for (int cam = 0; cam < n_cams; ++cam) {
      const BatchTarget target = make_target(seg, cam, n_cams);
      const auto outputs =
          model->forward(seg.features, visual_view(seg, cam), target.camera_onehot,
                         /*training=*/false);
      for (int f = 0; f < frames; ++f) {
        FramePrediction p;
        p.frame_index = base + f;
        p.camera_id = cam;
        p.x_pred_norm = outputs[static_cast<std::size_t>(f)].x_pred;
        p.confidence = outputs[static_cast<std::size_t>(f)].confidence;
        preds.push_back(p);

        FrameLabel l;
        l.frame_index = static_cast<int>(base + f);
        l.camera_id = cam;
        l.active = seg.active[static_cast<std::size_t>(f)] != 0;
        const double x = seg.x_target[static_cast<std::size_t>(cam)][static_cast<std::size_t>(f)];
        if (l.active && std::isfinite(x)) {
          l.has_center = true;
          l.has_mouth = true;
          l.x_center_norm = x;
          l.mouth_x_px = x * cfg.metrics.image_width_px;
        }
        labels.push_back(l);
      }
    }
  }

  write_predictions(eval_dir / "predictions.csv", preds);
  write_labels(eval_dir / "labels.csv", labels);

  const MetricsReport report =
      compute_report(preds, labels, rig.central_camera(), cfg.metrics);
  save_report_json(eval_dir / "report.json", report);
  write_pr_csv(eval_dir / "pr_curve.csv", report.pr_curve);

  finish_stage(cfg, Stage::evaluate, inputs,
               {eval_dir / "predictions.csv", eval_dir / "labels.csv", eval_dir / "report.json",
                eval_dir / "pr_curve.csv"},
               timer);
  std::cout << "[evaluate] " << format_report_row(report) << "\n";
}

std::string plot_inputs_hash(const RunConfig& cfg) {
  const fs::path curve = cfg.out_dir / "eval" / "pr_curve.csv";
  if (!fs::exists(curve)) {
    throw DataError("plot needs eval/pr_curve.csv; run the evaluate stage first");
  }
  return hash_inputs({hash_hex(hash_file(curve))});
}

void stage_plot(const RunConfig& cfg) {
  const std::string inputs = plot_inputs_hash(cfg);
  if (stage_up_to_date(cfg, Stage::plot, inputs)) {
    std::cout << "[plot] up to date, skipping\n";
    return;
  }
  StageTimer timer;
  const fs::path svg = cfg.out_dir / "eval" / "pr_curve.svg";
  plot_pr_csv(cfg.out_dir / "eval" / "pr_curve.csv", svg);
  finish_stage(cfg, Stage::plot, inputs, {svg}, timer);
  std::cout << "[plot] wrote " << svg.string() << "\n";
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::simulate: return "simulate";
    case Stage::extract: return "extract";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::plot: return "plot";
  }
  return "?";
}

std::vector<Stage> parse_stages(const std::string& csv) {
  std::vector<Stage> stages;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (item == "simulate") {
      stages.push_back(Stage::simulate);
    } else if (item == "extract") {
      stages.push_back(Stage::extract);
    } else if (item == "train") {
      stages.push_back(Stage::train);
    } else if (item == "evaluate") {
      stages.push_back(Stage::evaluate);
    } else if (item == "plot") {
      stages.push_back(Stage::plot);
    } else {
      throw ConfigError("unknown stage '" + item + "'");
    }
  }
  if (stages.empty()) throw ConfigError("no stages requested");
  return stages;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const KeyValueFile file = KeyValueFile::load(path);
  file.reject_unknown_sections({"run", "simulate", "model", "train", "metrics"});

  RunConfig cfg;
  const auto& run = file.section("run");
  run.reject_unknown_keys({"rig", "out", "seed"});
  cfg.rig_path = run.get_string("rig", "default");
  cfg.out_dir = run.get_string("out", "out");
  cfg.seed = run.get_uint64("seed", 0);

  if (file.has_section("simulate")) {
    cfg.corpus = corpus_options_from_section(file.section("simulate"));
  }
  if (file.has_section("model")) {
    cfg.model = model_config_from_section(file.section("model"));
  }
  if (file.has_section("train")) {
    cfg.train = train_config_from_section(file.section("train"));
  }
  if (file.has_section("metrics")) {
    cfg.metrics = metrics_options_from_section(file.section("metrics"));
  }
  apply_seed_override(cfg, cfg.seed);
  return cfg;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  KeyValueFile file;
  auto& run = file.add_section("run");
  run.set("rig", cfg.rig_path);
  run.set("out", cfg.out_dir.generic_string());
  run.set_uint64("seed", cfg.seed);
  corpus_options_to_section(cfg.corpus, file.add_section("simulate"));
  model_config_to_section(cfg.model, file.add_section("model"));
  train_config_to_section(cfg.train, file.add_section("train"));
  metrics_options_to_section(cfg.metrics, file.add_section("metrics"));
  file.save(path);
}

void apply_seed_override(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.corpus.seed = derive_seed(seed, "corpus");
  cfg.model.seed = derive_seed(seed, "model");
  cfg.train.seed = derive_seed(seed, "train");
}

RigConfig resolve_rig(const RunConfig& cfg) {
  if (cfg.rig_path == "default") return build_default_rig();
  return load_rig(cfg.rig_path);
}

void run_pipeline(const RunConfig& cfg, const std::vector<Stage>& stages) {
  validate_model_config(cfg.model);
  validate_train_config(cfg.train);
  const RigConfig rig = resolve_rig(cfg);
  std::filesystem::create_directories(cfg.out_dir);

  auto wants = [&](Stage s) {
    return std::find(stages.begin(), stages.end(), s) != stages.end();
  };
  if (wants(Stage::simulate)) stage_simulate(cfg, rig);
  if (wants(Stage::extract)) stage_extract(cfg, rig);
  if (wants(Stage::train)) stage_train(cfg);
  if (wants(Stage::evaluate)) stage_evaluate(cfg, rig);
  if (wants(Stage::plot)) stage_plot(cfg);
}

MetricsReport score_predictions(const std::filesystem::path& pred_file,
                                const std::filesystem::path& label_file,
                                const MetricsOptions& options) {
  const auto preds = read_predictions(pred_file);
  const auto labels = read_labels(label_file);
  CameraModel camera;
  camera.focal_length_px = 89.0 / std::tan(deg_to_rad(2.0));
  camera.image_width_px = options.image_width_px;
  camera.principal_point_px = options.image_width_px / 2.0;
  return compute_report(preds, labels, camera, options);
}

CorpusManifest ingest_tragic_talkers(const std::filesystem::path& root,
                                     const std::filesystem::path& out_dir,
                                     double image_width_px) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw DataError("ingest root does not exist: " + root.string());
  }
  fs::create_directories(out_dir);

  std::vector<fs::path> sequence_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) sequence_dirs.push_back(entry.path());
  }
  std::sort(sequence_dirs.begin(), sequence_dirs.end());

  CorpusManifest manifest;
  for (const auto& seq : sequence_dirs) {
    const std::string id = seq.filename().string();
    try {
      const fs::path audio = seq / "audio.wav";
      if (!fs::exists(audio)) throw DataError("no audio.wav");
      const MultichannelClip clip = read_wav(audio);
      if (clip.n_channels() != 16) {
        throw DataError("expected 16 channels, found " + std::to_string(clip.n_channels()));
      }

      // Voice activity: frame_index,active
      const fs::path vad_path = seq / "voice_activity.csv";
      if (!fs::exists(vad_path)) throw DataError("no voice_activity.csv");
      std::ifstream vad_in(vad_path);
      std::string line;
      std::getline(vad_in, line);
      if (line != "frame_index,active") throw DataError("bad voice_activity.csv header");
      std::vector<bool> active;
      while (std::getline(vad_in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError("bad voice_activity.csv row");
        active.push_back(std::stoi(line.substr(comma + 1)) != 0);
      }
      if (active.empty()) throw DataError("voice_activity.csv has no frames");
      const int n_frames = static_cast<int>(active.size());

      // Face boxes: frame_index,camera_id,x1,y1,x2,y2
      struct Box {
        double center = 0.0;
        bool present = false;
      };
      std::vector<std::vector<Box>> boxes(static_cast<std::size_t>(n_frames),
                                          std::vector<Box>(11));
      const fs::path box_path = seq / "face_bboxes.csv";
      if (fs::exists(box_path)) {
        std::ifstream box_in(box_path);
        std::getline(box_in, line);
        if (line != "frame_index,camera_id,x1,y1,x2,y2") {
          throw DataError("bad face_bboxes.csv header");
        }
        while (std::getline(box_in, line)) {
          if (line.empty()) continue;
          std::istringstream row(line);
          std::string field;
          std::vector<std::string> fields;
          while (std::getline(row, field, ',')) fields.push_back(field);
          if (fields.size() != 6) throw DataError("bad face_bboxes.csv row");
          const int frame = std::stoi(fields[0]);
          const int cam = std::stoi(fields[1]);
          if (frame < 0 || frame >= n_frames || cam < 0 || cam >= 11) continue;
          Box b;
          b.center = (std::stod(fields[2]) + std::stod(fields[4])) / 2.0;
          b.present = true;
          boxes[static_cast<std::size_t>(frame)][static_cast<std::size_t>(cam)] = b;
        }
      }

      // Optional mouth coordinates: frame_index,camera_id,mouth_x_px
      std::vector<std::vector<std::pair<bool, double>>> mouths(
          static_cast<std::size_t>(n_frames),
          std::vector<std::pair<bool, double>>(11, {false, 0.0}));
      const fs::path mouth_path = seq / "mouth.csv";
      bool have_mouth_file = fs::exists(mouth_path);
      if (have_mouth_file) {
        std::ifstream mouth_in(mouth_path);
        std::getline(mouth_in, line);
        if (line != "frame_index,camera_id,mouth_x_px") throw DataError("bad mouth.csv header");
        while (std::getline(mouth_in, line)) {
          if (line.empty()) continue;
          std::istringstream row(line);
          std::string field;
          std::vector<std::string> fields;
          while (std::getline(row, field, ',')) fields.push_back(field);
          if (fields.size() != 3) throw DataError("bad mouth.csv row");
          const int frame = std::stoi(fields[0]);
          const int cam = std::stoi(fields[1]);
          if (frame < 0 || frame >= n_frames || cam < 0 || cam >= 11) continue;
          mouths[static_cast<std::size_t>(frame)][static_cast<std::size_t>(cam)] = {
              true, std::stod(fields[2])};
        }
      } else {
        std::cerr << "[ingest] warning: " << id
                  << " has no mouth.csv; evaluation fields will be absent\n";
      }

      const fs::path scene_dir = out_dir / id;
      fs::create_directories(scene_dir);
      fs::copy_file(audio, scene_dir / "audio.wav", fs::copy_options::overwrite_existing);

      std::vector<FrameLabel> labels;
      for (int f = 0; f < n_frames; ++f) {
        for (int cam = 0; cam < 11; ++cam) {
          FrameLabel l;
          l.frame_index = f;
          l.camera_id = cam;
          l.active = active[static_cast<std::size_t>(f)];
          const Box& b = boxes[static_cast<std::size_t>(f)][static_cast<std::size_t>(cam)];
          if (l.active && b.present) {
            l.has_center = true;
            l.x_center_norm = b.center / image_width_px;
          }
          const auto& m = mouths[static_cast<std::size_t>(f)][static_cast<std::size_t>(cam)];
          if (l.active && m.first) {
            l.has_mouth = true;
            l.mouth_x_px = m.second;
          }
          labels.push_back(l);
        }
      }
      write_labels(scene_dir / "labels.csv", labels);

      // No pixel data: the visual stream is a zero placeholder so the
      // corpus stays loadable; plug real embeddings for the visual path.
      Tensor visual({11, n_frames, 64});
      write_tensor(scene_dir / "visual.tensor", visual, Dtype::f32);

      SceneEntry entry;
      entry.scene_id = id;
      entry.split = "test";
      entry.audio_path = id + "/audio.wav";
      entry.labels_path = id + "/labels.csv";
      entry.visual_path = id + "/visual.tensor";
      entry.script_path = "";
      entry.n_frames = n_frames;
      entry.duration_s = n_frames / static_cast<double>(kLabelFps);
      manifest.scenes.push_back(entry);
    } catch (const std::exception& e) {
      std::cerr << "[ingest] skipping " << id << ": " << e.what() << "\n";
    }
  }

  if (manifest.scenes.empty()) {
    throw DataError("ingest found no usable sequences under " + root.string());
  }
  save_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

void plot_pr_csv(const std::filesystem::path& curve_csv, const std::filesystem::path& svg_path) {
  std::ifstream in(curve_csv);
  if (!in) throw DataError("cannot open PR curve: " + curve_csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "threshold,precision,recall") {
    throw DataError("PR curve file has an unexpected header: " + curve_csv.string());
  }
  std::vector<PrPoint> curve;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c)) {
      throw DataError(curve_csv.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    try {
      curve.push_back(PrPoint{std::stod(a), std::stod(b), std::stod(c)});
    } catch (const std::exception&) {
      throw DataError(curve_csv.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  if (curve.empty()) throw DataError("PR curve file is empty: " + curve_csv.string());
  write_pr_svg(svg_path, curve, best_f1(curve));
}

}  // namespace asdl
