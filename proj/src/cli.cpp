#include "tdl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdl/anchors.hpp"
#include "tdl/config.hpp"
#include "tdl/datagen.hpp"
#include "tdl/dataset.hpp"
#include "tdl/error.hpp"
#include "tdl/eval.hpp"
#include "tdl/io.hpp"
#include "tdl/pseudo.hpp"
#include "tdl/trainer.hpp"

namespace tdl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json kv_json(const KeyValues& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.entries()) j[k] = v;
  return j;
}

/* Explicit path, else $TDL_OUTPUT_ROOT/<fallback>. */
fs::path output_dir(const std::string& given, const std::string& fallback) {
  if (!given.empty()) return given;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / fallback;
  throw UsageError("--out is required when " + std::string(kOutputRootEnv) + " is not set");
}

void write_run_manifest(const fs::path& dir, const std::string& subcommand, const json& config,
                        const json& inputs, const json& outputs, std::uint64_t seed, double seconds) {
  json j;
  j["subcommand"] = subcommand;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["seed"] = seed;
  j["tool_version"] = kVersion;
  j["duration_seconds"] = seconds;
  fs::create_directories(dir);
  io::write_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
}

/// Applies repeated key=value overrides.
void apply_overrides(KeyValues& kv, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

std::pair<Index, Index> parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw UsageError("--patch-grid expects RxC, got '" + text + "'");
  try {
    std::size_t a = 0, b = 0;
    const long rows = std::stol(text.substr(0, x), &a);
    const long cols = std::stol(text.substr(x + 1), &b);
    if (a != x || b != text.size() - x - 1 || rows < 1 || cols < 1) throw std::invalid_argument(text);
    return {rows, cols};
  } catch (const std::logic_error&) {
    throw UsageError("--patch-grid expects RxC with positive integers, got '" + text + "'");
  }
}

// ---- anchors ---------------------------------------------------------------

struct AnchorsArgs {
  std::string in, out;
};

int run_anchors(const AnchorsArgs& a) {
  Stopwatch clock;
  const io::AnchorFile raw_file = io::read_anchor_file(a.in);
  const RawEmbeddingMatrix<double> raw{raw_file.rows, raw_file.class_names};
  const AnchorSet<double> anchors = orthogonalize(raw);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::save_anchors(out, anchors);
  std::cout << "orthogonalized " << anchors.num_classes() << " anchors of dimension " << anchors.dim()
            << " -> " << out.string() << "\n";
  write_run_manifest(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "anchors orthogonalize",
                     json::object(), {{"in", a.in}}, {{"anchors", a.out}}, 0, clock.seconds());
  return 0;
}

// ---- pseudo ----------------------------------------------------------------

struct PseudoArgs {
  std::string cams, grid, out;
  std::uint64_t seed = 0;
  Index n_fg = 0, n_bg = 0, samples = 0;
  int bins = 256;
};

int run_pseudo(const PseudoArgs& a) {
  Stopwatch clock;
  const auto [rows, cols] = parse_grid(a.grid);
  const fs::path out = output_dir(a.out, "pseudo");
  std::vector<fs::path> files;
  if (fs::is_directory(a.cams)) {
    for (const auto& entry : fs::directory_iterator(a.cams))
      if (entry.path().extension() == ".tdlm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(a.cams);
  }
  if (files.empty()) throw Error(ErrorCode::MissingCam, "no .tdlm files in " + a.cams);

  SamplerConfig cfg = SamplerConfig::defaults_for(rows * cols);
  if (a.n_fg > 0) cfg.n_fg = a.n_fg;
  if (a.n_bg > 0) cfg.n_bg = a.n_bg;
  if (a.samples > 0) cfg.samples_per_side = a.samples;
  cfg.histogram_bins = a.bins;
  cfg.seed = a.seed;
  cfg.validate(rows * cols);

  Rng rng(a.seed);
  std::ostringstream lines;
  for (const fs::path& f : files) {
    const ActivationMap cam = io::read_cam(f);
    const Eigen::MatrixXd grid = to_patch_grid(cam.values, rows, cols);
    const double threshold = otsu_threshold(grid, cfg.histogram_bins);
    const SampledPatchSet s = sample_fg_bg(grid, cfg, rng);
    json fg = json::array(), bg = json::array();
    for (std::size_t i = 0; i < s.locations.size(); ++i)
      (s.labels[i] ? fg : bg).push_back({s.locations[i].row, s.locations[i].col});
    lines << json{{"id", cam.image_id}, {"threshold", threshold}, {"fg", fg}, {"bg", bg}}.dump() << "\n";
  }
  fs::create_directories(out);
  io::write_atomic(out / "pseudo_labels.jsonl", lines.str());
  std::cout << "sampled " << files.size() << " maps -> " << (out / "pseudo_labels.jsonl").string() << "\n";
  write_run_manifest(out, "pseudo generate",
                     {{"patch_grid", a.grid}, {"n_fg", cfg.n_fg}, {"n_bg", cfg.n_bg},
                      {"samples_per_side", cfg.samples_per_side}, {"histogram_bins", cfg.histogram_bins}},
                     {{"cams", a.cams}}, {{"pseudo_labels", (out / "pseudo_labels.jsonl").string()}}, a.seed,
                     clock.seconds());
  return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

int run_synth(const SynthArgs& a) {
  Stopwatch clock;
  KeyValues kv = a.config.empty() ? KeyValues{} : KeyValues::read(a.config);
  apply_overrides(kv, a.sets);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  SynthConfig cfg;
  cfg.apply(kv);
  const fs::path out = output_dir(a.out, "synth");
  const SyntheticDataset data = generate(cfg);
  write_dataset(data, out);
  std::cout << "wrote " << data.samples.size() << " images to " << out.string() << "\n";
  write_run_manifest(out, "synth generate", kv_json(cfg.to_key_values()), {{"config", a.config}},
                     {{"manifest", (out / "manifest.jsonl").string()},
                      {"raw_anchors", (out / "anchors_raw.tdla").string()}},
                     cfg.seed, clock.seconds());
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string manifest, config, out, resume;
  std::vector<std::string> sets;
  CLI::Option* upscale = nullptr;
  CLI::Option* embed_dim = nullptr;
  CLI::Option* encoder = nullptr;
  CLI::Option* lambda_kd = nullptr;
  CLI::Option* lambda_pcl = nullptr;
  CLI::Option* lambda_icl = nullptr;
  CLI::Option* lambda_grid = nullptr;
  CLI::Option* anchors = nullptr;
  CLI::Option* jobs = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* steps = nullptr;
  CLI::Option* lr = nullptr;
};

int run_train(const TrainArgs& a) {
  Stopwatch clock;
  KeyValues kv = a.config.empty() ? KeyValues{} : KeyValues::read(a.config);
  apply_overrides(kv, a.sets);
  auto flag = [&](CLI::Option* opt, const std::string& key) {
    if (opt && opt->count() > 0) kv.set(key, opt->as<std::string>());
  };
  flag(a.upscale, "upscale");
  flag(a.embed_dim, "embed_dim");
  flag(a.encoder, "encoder");
  flag(a.lambda_kd, "lambda_kd");
  flag(a.lambda_pcl, "lambda_pcl");
  flag(a.lambda_icl, "lambda_icl");
  flag(a.lambda_grid, "lambda_grid");
  flag(a.anchors, "anchors");
  flag(a.jobs, "jobs");
  flag(a.seed, "seed");
  flag(a.steps, "max_steps");
  flag(a.lr, "learning_rate");
  TrainConfig cfg;
  cfg.apply(kv);
  const fs::path out = output_dir(a.out, "train");
  std::optional<fs::path> resume;
  if (!a.resume.empty()) resume = fs::path(a.resume);

  const TrainOutcome outcome = train(a.manifest, cfg, out, resume);
  std::cout << "selected step " << outcome.best.step << " with validation MaxBoxAcc "
            << outcome.best_metric << " (lambda " << outcome.weights.kd << ", " << outcome.weights.pcl
            << ", " << outcome.weights.icl << ") -> " << outcome.checkpoint_path.string() << "\n";
  write_run_manifest(out, "train", kv_json(cfg.to_key_values()),
                     {{"manifest", a.manifest}, {"config", a.config}, {"resume", a.resume}},
                     {{"checkpoint", outcome.checkpoint_path.string()},
                      {"log", (out / "train_log.jsonl").string()},
                      {"val_maxboxacc", outcome.best_metric}},
                     cfg.seed, clock.seconds());
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, manifest, report, split = "test", encoder = "synthetic", anchors;
  bool patch_text = false;
  Index jobs = 1;
  Index resolution = 256;
  double iou = 0.5;
};

int run_eval(const EvalArgs& a) {
  Stopwatch clock;
  EvaluationOptions opts;
  opts.patch_text = a.patch_text;
  opts.jobs = a.jobs;
  opts.eval.map_resolution = a.resolution;
  opts.eval.iou_threshold = a.iou;
  std::optional<fs::path> anchors;
  if (!a.anchors.empty()) anchors = fs::path(a.anchors);
  const Evaluation e = evaluate(a.checkpoint, a.manifest, a.split, opts, a.encoder, anchors);
  json j = e.to_json();
  j["split"] = a.split;
  j["checkpoint"] = a.checkpoint;
  const fs::path report(a.report);
  const fs::path dir = report.parent_path().empty() ? fs::path(".") : report.parent_path();
  fs::create_directories(dir);
  io::write_atomic(report, j.dump(2) + "\n");
  const EvalReport& r = e.localization;
  std::cout << std::fixed << std::setprecision(4) << "MaxBoxAcc " << r.maxboxacc << "  Top-1 Loc "
            << r.top1_loc << "  Top-5 Loc " << r.top5_loc << "  Top-1 Cls " << r.top1_cls << "\n";
  if (e.patch_text)
    std::cout << "patch-text map (uses labels) MaxBoxAcc " << e.patch_text->maxboxacc << "\n";
  write_run_manifest(dir, "eval",
                     {{"split", a.split}, {"patch_text_map", a.patch_text}, {"jobs", a.jobs},
                      {"map_resolution", a.resolution}, {"iou_threshold", a.iou}, {"encoder", a.encoder}},
                     {{"checkpoint", a.checkpoint}, {"manifest", a.manifest}, {"anchors", a.anchors}},
                     {{"report", a.report}}, 0, clock.seconds());
  return 0;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
  std::string report, out, checkpoint, manifest, split = "test";
  bool plot = false;
  Index limit = 8;
};

std::string curve_svg(const json& report) {
  const int w = 480, h = 320, m = 40;
  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">threshold</text>\n"
      << "<text x=\"12\" y=\"" << h / 2 << "\" transform=\"rotate(-90 12 " << h / 2
      << ")\" text-anchor=\"middle\">box accuracy</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728"};
  int series = 0;
  auto draw = [&](const json& r) {
    svg << "<polyline fill=\"none\" stroke=\"" << colors[series % 2] << "\" stroke-width=\"2\" points=\"";
    for (const json& p : r.at("curve")) {
      const double x = m + p.at("threshold").get<double>() * (w - 2 * m);
      const double y = (h - m) - p.at("acc").get<double>() * (h - 2 * m);
      svg << x << "," << y << " ";
    }
    svg << "\"/>\n<text x=\"" << w - m << "\" y=\"" << m + 16 * series << "\" text-anchor=\"end\" fill=\""
        << colors[series % 2] << "\">" << r.value("source", "map") << "</text>\n";
    ++series;
  };
  draw(report);
  if (report.contains("patch_text")) draw(report.at("patch_text"));
  svg << "</svg>\n";
  return svg.str();
}

/* Heat colours on a dark background with the GT box in green and the
 * predicted box in white. */
std::string overlay_ppm(const Eigen::MatrixXd& map, const std::vector<BBox>& gts, const BBox& pred) {
  const Index hgt = map.rows(), wid = map.cols();
  std::vector<unsigned char> rgb(static_cast<std::size_t>(hgt * wid * 3));
  auto put = [&](Index y, Index x, int r, int g, int b) {
    if (y < 0 || y >= hgt || x < 0 || x >= wid) return;
    const auto at = static_cast<std::size_t>((y * wid + x) * 3);
    rgb[at] = static_cast<unsigned char>(r);
    rgb[at + 1] = static_cast<unsigned char>(g);
    rgb[at + 2] = static_cast<unsigned char>(b);
  };
  for (Index y = 0; y < hgt; ++y)
    for (Index x = 0; x < wid; ++x) {
      const double v = std::clamp(map(y, x), 0.0, 1.0);
      put(y, x, static_cast<int>(255 * std::min(1.0, 2 * v)), static_cast<int>(255 * std::max(0.0, 2 * v - 1)),
          static_cast<int>(64 * (1 - v)));
    }
  auto outline = [&](const BBox& b, int r, int g, int bl) {
    for (std::int64_t x = b.x_min; x < b.x_max; ++x) {
      put(b.y_min, x, r, g, bl);
      put(b.y_max - 1, x, r, g, bl);
    }
    for (std::int64_t y = b.y_min; y < b.y_max; ++y) {
      put(y, b.x_min, r, g, bl);
      put(y, b.x_max - 1, r, g, bl);
    }
  };
  for (const BBox& gt : gts) outline(gt, 0, 255, 0);
  outline(pred, 255, 255, 255);
  std::string out = "P6\n" + std::to_string(wid) + " " + std::to_string(hgt) + "\n255\n";
  out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  return out;
}

int run_report(const ReportArgs& a) {
  Stopwatch clock;
  json report;
  try {
    report = json::parse(io::read_bytes(a.report));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, a.report + ": " + e.what());
  }
  std::cout << std::fixed << std::setprecision(4);
  auto summary = [&](const json& r) {
    std::cout << r.value("source", "map") << (r.value("uses_labels", false) ? " (uses labels)" : "")
              << ": MaxBoxAcc " << r.value("maxboxacc", 0.0) << "  Top-1 Loc " << r.value("top1_loc", 0.0)
              << "  Top-5 Loc " << r.value("top5_loc", 0.0) << "  Top-1 Cls " << r.value("top1_cls", 0.0)
              << "  best threshold " << r.value("best_threshold", 0.0) << "\n";
  };
  summary(report);
  if (report.contains("patch_text")) summary(report.at("patch_text"));
  if (!a.plot) return 0;

  const fs::path out = output_dir(a.out, "report");
  fs::create_directories(out);
  io::write_atomic(out / "accuracy_curve.svg", curve_svg(report));
  json outputs = {{"curve", (out / "accuracy_curve.svg").string()}};
  if (a.checkpoint.empty() || a.manifest.empty()) {
    std::cerr << "overlays skipped: --checkpoint and --manifest are needed to recompute maps\n";
  } else {
    const io::Checkpoint ckpt = io::read_checkpoint(a.checkpoint);
    const AnchorSet<double> anchors = io::load_anchors(ckpt.anchors_path);
    const auto encoder = make_encoder(ckpt.extra.value("encoder", std::string("synthetic")));
    const std::vector<Sample> samples = select_split(load_samples(a.manifest), a.split);
    const EvalConfig cfg;
    const double tau = report.value("best_threshold", cfg.thresholds.front());
    json overlays = json::array();
    for (std::size_t i = 0; i < samples.size() && static_cast<Index>(i) < a.limit; ++i) {
      const Sample& s = samples[i];
      const Prediction<double> pred = forward(encoder->encode(s.features, s.id), ckpt.params, anchors, ckpt.model);
      const Index res = cfg.map_resolution;
      const Eigen::MatrixXd canvas = min_max_normalize(resize_bilinear(pred.map.as_matrix(), res, res));
      const BBox box = scale_box(map_to_box(canvas, tau), res, res, s.image_width, s.image_height);
      const Eigen::MatrixXd shown =
          min_max_normalize(resize_bilinear(pred.map.as_matrix(), s.image_height, s.image_width));
      const fs::path path = out / ("overlay_" + s.id + ".ppm");
      io::write_atomic(path, overlay_ppm(shown, s.gt_boxes, box));
      overlays.push_back(path.string());
    }
    outputs["overlays"] = overlays;
  }
  std::cout << "plots -> " << out.string() << "\n";
  write_run_manifest(out, "report", {{"plot", true}, {"limit", a.limit}, {"split", a.split}},
                     {{"report", a.report}, {"checkpoint", a.checkpoint}, {"manifest", a.manifest}}, outputs, 0,
                     clock.seconds());
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Text-anchored patch localization: anchors, pseudo-labels, training and evaluation", "tdl"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  AnchorsArgs anchors_args;
  auto* anchors = app.add_subcommand("anchors", "Class anchor utilities");
  anchors->require_subcommand(1);
  auto* ortho = anchors->add_subcommand("orthogonalize", "QR-orthogonalize raw class embeddings");
  ortho->add_option("--in", anchors_args.in, "Raw anchor file (.tdla)")->required();
  ortho->add_option("--out", anchors_args.out, "Output anchor file")->required();

  PseudoArgs pseudo_args;
  auto* pseudo = app.add_subcommand("pseudo", "Pseudo-label utilities");
  pseudo->require_subcommand(1);
  auto* pgen = pseudo->add_subcommand("generate", "Sample FG/BG patches from teacher CAMs");
  pgen->add_option("--cams", pseudo_args.cams, "CAM file or directory of .tdlm files")->required();
  pgen->add_option("--patch-grid", pseudo_args.grid, "Patch grid as RxC, e.g. 24x24")->required();
  pgen->add_option("--out", pseudo_args.out, "Output directory");
  pgen->add_option("--seed", pseudo_args.seed, "Sampling seed");
  pgen->add_option("--n-fg", pseudo_args.n_fg, "FG candidate pool size (default 20% of patches)");
  pgen->add_option("--n-bg", pseudo_args.n_bg, "BG candidate pool size (default 20% of patches)");
  pgen->add_option("--samples-per-side", pseudo_args.samples, "Patches drawn per side");
  pgen->add_option("--bins", pseudo_args.bins, "Otsu histogram bins");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Synthetic data");
  synth->require_subcommand(1);
  auto* sgen = synth->add_subcommand("generate", "Generate a synthetic dataset");
  sgen->add_option("--config", synth_args.config, "Key-value config file");
  sgen->add_option("--out", synth_args.out, "Output directory");
  sgen->add_option("--seed", synth_args.seed, "Override the seed");
  sgen->add_option("--set", synth_args.sets, "Override a config key (key=value)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the decoder and patch classifier");
  train_cmd->add_option("--manifest", train_args.manifest, "Dataset manifest (.jsonl)")->required();
  train_cmd->add_option("--config", train_args.config, "Key-value config file");
  train_cmd->add_option("--out", train_args.out, "Output directory");
  train_cmd->add_option("--resume", train_args.resume, "Training state to resume from (state.tdlc)");
  train_cmd->add_option("--set", train_args.sets, "Override a config key (key=value)");
  train_args.upscale = train_cmd->add_option("--upscale", "Decoder upscale factor")->type_name("INT");
  train_args.embed_dim = train_cmd->add_option("--embed-dim", "Patch embedding dimension")->type_name("INT");
  train_args.encoder = train_cmd->add_option("--encoder", "synthetic or external:<weights.json>");
  train_args.lambda_kd = train_cmd->add_option("--lambda-kd", "Weight of the distillation loss");
  train_args.lambda_pcl = train_cmd->add_option("--lambda-pcl", "Weight of the patch classification loss");
  train_args.lambda_icl = train_cmd->add_option("--lambda-icl", "Weight of the image classification loss");
  train_args.lambda_grid = train_cmd->add_option("--lambda-grid", "Grid of weights, e.g. \"1,1,1;1,0.5,0.5\"");
  train_args.anchors = train_cmd->add_option("--anchors", "Anchor file");
  train_args.jobs = train_cmd->add_option("--jobs", "Worker threads")->type_name("INT");
  train_args.seed = train_cmd->add_option("--seed", "Seed")->type_name("UINT");
  train_args.steps = train_cmd->add_option("--steps", "Maximum optimizer steps")->type_name("INT");
  train_args.lr = train_cmd->add_option("--lr", "Learning rate")->type_name("FLOAT");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint (.tdlc)")->required();
  eval_cmd->add_option("--manifest", eval_args.manifest, "Dataset manifest (.jsonl)")->required();
  eval_cmd->add_option("--report", eval_args.report, "Output report (.json)")->required();
  eval_cmd->add_option("--split", eval_args.split, "Split to evaluate")->capture_default_str();
  eval_cmd->add_flag("--patch-text-map", eval_args.patch_text,
                     "Also localize with the patch-text diagnostic map (consumes GT labels)");
  eval_cmd->add_option("--jobs", eval_args.jobs, "Worker threads")->capture_default_str();
  eval_cmd->add_option("--encoder", eval_args.encoder, "synthetic or external:<weights.json>")
      ->capture_default_str();
  eval_cmd->add_option("--anchors", eval_args.anchors, "Override the checkpoint's anchor file");
  eval_cmd->add_option("--map-resolution", eval_args.resolution, "Evaluation canvas side")->capture_default_str();
  eval_cmd->add_option("--iou-threshold", eval_args.iou, "IoU acceptance threshold")->capture_default_str();

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Summarize an evaluation report");
  report_cmd->add_option("--report", report_args.report, "Report produced by eval")->required();
  report_cmd->add_flag("--plot", report_args.plot, "Write the accuracy curve and heatmap overlays");
  report_cmd->add_option("--out", report_args.out, "Directory for plots");
  report_cmd->add_option("--checkpoint", report_args.checkpoint, "Checkpoint for overlays");
  report_cmd->add_option("--manifest", report_args.manifest, "Manifest for overlays");
  report_cmd->add_option("--split", report_args.split, "Split for overlays")->capture_default_str();
  report_cmd->add_option("--limit", report_args.limit, "Number of overlays")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (ortho->parsed()) return run_anchors(anchors_args);
    if (pgen->parsed()) return run_pseudo(pseudo_args);
    if (sgen->parsed()) return run_synth(synth_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (report_cmd->parsed()) return run_report(report_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int dispatch(int argc, char** argv) { return dispatch(std::vector<std::string>(argv, argv + argc)); }

}  // namespace tdl::cli
