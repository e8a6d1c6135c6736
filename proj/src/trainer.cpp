#include "tdl/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tdl/error.hpp"
#include "tdl/io.hpp"
#include "tdl/parallel.hpp"

namespace tdl {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string weights_text(const LossWeights& w) { return num(w.kd) + "," + num(w.pcl) + "," + num(w.icl); }

nlohmann::json weights_json(const LossWeights& w) { return {{"kd", w.kd}, {"pcl", w.pcl}, {"icl", w.icl}}; }

nlohmann::json loss_json(const LossBreakdown& l) {
  return {{"l_kd", l.l_kd}, {"p_cl", l.p_cl}, {"i_cl", l.i_cl}, {"total", l.total}};
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (upscale < 1) fail("upscale must be >= 1");
  if (embed_dim < 0) fail("embed_dim must be >= 0");
  if (jobs < 1) fail("jobs must be >= 1");
  if (state_every < 0) fail("state_every must be >= 0");
  weights.validate();
  for (const LossWeights& w : lambda_grid) {
    w.validate();
    if (w.kd > 1 || w.pcl > 1 || w.icl > 1) fail("lambda grid values must lie in [0, 1]");
  }
  eval.validate();
}

void TrainConfig::apply(const KeyValues& kv) {
  epochs = kv.get_int("epochs", epochs);
  max_steps = kv.get_int("max_steps", max_steps);
  batch_size = kv.get_int("batch_size", batch_size);
  learning_rate = kv.get_double("learning_rate", learning_rate);
  momentum = kv.get_double("momentum", momentum);
  weight_decay = kv.get_double("weight_decay", weight_decay);
  weights.kd = kv.get_double("lambda_kd", weights.kd);
  weights.pcl = kv.get_double("lambda_pcl", weights.pcl);
  weights.icl = kv.get_double("lambda_icl", weights.icl);
  sampler.n_fg = kv.get_int("n_fg", sampler.n_fg);
  sampler.n_bg = kv.get_int("n_bg", sampler.n_bg);
  sampler.samples_per_side = kv.get_int("samples_per_side", sampler.samples_per_side);
  sampler.histogram_bins = static_cast<int>(kv.get_int("histogram_bins", sampler.histogram_bins));
  temperature = kv.get_double("temperature", temperature);
  normalize = kv.get_bool("normalize", normalize);
  mean_over_patches = kv.get_bool("mean_over_patches", mean_over_patches);
  upscale = kv.get_int("upscale", upscale);
  embed_dim = kv.get_int("embed_dim", embed_dim);
  seed = kv.get_uint("seed", seed);
  jobs = kv.get_int("jobs", jobs);
  state_every = kv.get_int("state_every", state_every);
  eval.iou_threshold = kv.get_double("iou_threshold", eval.iou_threshold);
  eval.map_resolution = kv.get_int("map_resolution", eval.map_resolution);
  if (kv.has("sweep_size"))
    eval.thresholds = EvalConfig::default_sweep(static_cast<std::size_t>(kv.get_uint("sweep_size", 100)));
  encoder = kv.get_string("encoder", encoder);
  anchors = kv.get_string("anchors", anchors);
  if (kv.has("lambda_grid")) lambda_grid = parse_lambda_grid(kv.get_string("lambda_grid", ""));
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("epochs", std::to_string(epochs));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("learning_rate", num(learning_rate));
  kv.set("momentum", num(momentum));
  kv.set("weight_decay", num(weight_decay));
  kv.set("lambda_kd", num(weights.kd));
  kv.set("lambda_pcl", num(weights.pcl));
  kv.set("lambda_icl", num(weights.icl));
  kv.set("n_fg", std::to_string(sampler.n_fg));
  kv.set("n_bg", std::to_string(sampler.n_bg));
  kv.set("samples_per_side", std::to_string(sampler.samples_per_side));
  kv.set("histogram_bins", std::to_string(sampler.histogram_bins));
  kv.set("temperature", num(temperature));
  kv.set("normalize", normalize ? "true" : "false");
  kv.set("mean_over_patches", mean_over_patches ? "true" : "false");
  kv.set("upscale", std::to_string(upscale));
  kv.set("embed_dim", std::to_string(embed_dim));
  kv.set("seed", std::to_string(seed));
  kv.set("jobs", std::to_string(jobs));
  kv.set("state_every", std::to_string(state_every));
  kv.set("iou_threshold", num(eval.iou_threshold));
  kv.set("map_resolution", std::to_string(eval.map_resolution));
  kv.set("sweep_size", std::to_string(eval.thresholds.size()));
  kv.set("encoder", encoder);
  kv.set("anchors", anchors);
  if (!lambda_grid.empty()) {
    std::string grid;
    for (const LossWeights& w : lambda_grid) grid += (grid.empty() ? "" : ";") + weights_text(w);
    kv.set("lambda_grid", grid);
  }
  return kv;
}

ModelConfig TrainConfig::model_config(Index input_dim, Index anchor_dim) const {
  ModelConfig m;
  m.input_dim = input_dim;
  m.embed_dim = embed_dim == 0 ? anchor_dim : embed_dim;
  m.upscale = upscale;
  m.scoring.temperature = temperature;
  m.scoring.normalize = normalize;
  return m;
}

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.scoring.temperature = temperature;
  o.scoring.normalize = normalize;
  o.mean_over_patches = mean_over_patches;
  return o;
}

std::vector<LossWeights> parse_lambda_grid(const std::string& text) {
  std::vector<LossWeights> out;
  std::stringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.find_first_not_of(" \t") == std::string::npos) continue;
    std::stringstream parts(group);
    std::string part;
    std::vector<double> values;
    while (std::getline(parts, part, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(part, &used));
        if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "bad lambda grid entry '" + group + "'");
      }
    }
    if (values.size() != 3) throw Error(ErrorCode::InvalidConfig, "lambda grid entries need three values");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda grid values must lie in [0, 1]");
    out.push_back({values[0], values[1], values[2]});
    out.back().validate();
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "empty lambda grid");
  return out;
}

bool operator==(const ModelParameters<double>& a, const ModelParameters<double>& b) {
  return a.size() == b.size() && a.flatten() == b.flatten();
}

void TrainState::save(const fs::path& path) const {
  io::Container c;
  c.header["kind"] = "train_state";
  c.header["step"] = step;
  c.header["epoch"] = epoch;
  c.header["cursor"] = cursor;
  c.header["order"] = order;
  c.header["rng"] = rng.serialize();
  c.header["history"] = nlohmann::json::array();
  for (const LossBreakdown& l : history) c.header["history"].push_back({l.l_kd, l.p_cl, l.i_cl, l.total});
  c.header["best_step"] = best_step;
  c.header["shape"] = {params.decoder.projection.rows(), params.decoder.projection.cols()};
  auto block = [](const std::string& name, const Vector<double>& v) {
    return io::Block{name, "f64", std::vector<double>(v.data(), v.data() + v.size())};
  };
  c.blocks.push_back(block("params", params.flatten()));
  c.blocks.push_back(block("momentum", momentum.flatten()));
  c.blocks.push_back(block("best_params", best_params.flatten()));
  c.blocks.push_back(io::Block{"val_history", "f64", val_history});
  c.blocks.push_back(io::Block{"best_metric", "f64", {best_metric}});
  io::write_container(path, c);
}

TrainState TrainState::load(const fs::path& path) {
  const io::Container c = io::read_container(path);
  try {
    if (c.header.at("kind") != "train_state")
      throw Error(ErrorCode::FormatError, path.string() + " is not a training state");
    TrainState s;
    s.step = c.header.at("step").get<std::int64_t>();
    s.epoch = c.header.at("epoch").get<Index>();
    s.cursor = c.header.at("cursor").get<Index>();
    s.order = c.header.at("order").get<std::vector<Index>>();
    s.rng = Rng::deserialize(c.header.at("rng").get<std::string>());
    for (const auto& h : c.header.at("history"))
      s.history.push_back({h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>(),
                           h.at(3).get<double>()});
    s.best_step = c.header.at("best_step").get<std::int64_t>();
    ModelConfig m;
    m.embed_dim = c.header.at("shape").at(0).get<Index>();
    m.input_dim = c.header.at("shape").at(1).get<Index>();
    auto restore = [&](const std::string& name) {
      const io::Block& b = c.block(name);
      ModelParameters<double> p = ModelParameters<double>::zeros(m);
      p.assign(Eigen::Map<const Vector<double>>(b.data.data(), static_cast<Index>(b.data.size())));
      return p;
    };
    s.params = restore("params");
    s.momentum = restore("momentum");
    s.best_params = restore("best_params");
    s.val_history = c.block("val_history").data;
    s.best_metric = c.block("best_metric").data.at(0);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

Trainer::Trainer(TrainConfig cfg, AnchorSet<double> anchors, std::vector<Sample> train,
                 std::vector<Sample> val, const Encoder& encoder)
    : cfg_(std::move(cfg)), anchors_(std::move(anchors)), train_(std::move(train)), val_(std::move(val)) {
  if (train_.empty()) throw Error(ErrorCode::InvalidManifest, "no training images");
  if (val_.empty()) throw Error(ErrorCode::InvalidManifest, "no validation images");
  for (const Sample& s : train_) train_inputs_.push_back(encoder.encode(s.features, s.id));
  for (const Sample& s : val_) val_inputs_.push_back(encoder.encode(s.features, s.id));

  const EncoderOutput<double>& first = train_inputs_.front();
  model_ = cfg_.model_config(first.features.cols(), anchors_.dim());
  model_.validate();
  if (model_.embed_dim != anchors_.dim())
    throw Error(ErrorCode::DimensionMismatch, "embed_dim differs from the anchor dimension");
  auto check = [&](const EncoderOutput<double>& e) {
    if (!(e.shape == first.shape) || e.features.cols() != first.features.cols())
      throw Error(ErrorCode::ShapeMismatch, "image " + e.image_id + " has a different feature grid");
  };
  for (const auto& e : train_inputs_) check(e);
  for (const auto& e : val_inputs_) check(e);
  for (const Sample& s : train_)
    if (s.label < 0 || s.label >= anchors_.num_classes())
      throw Error(ErrorCode::InvalidManifest, "label of " + s.id + " is outside the anchor classes");

  const GridShape decoded{first.shape.rows * model_.upscale, first.shape.cols * model_.upscale};
  sampler_ = cfg_.sampler;
  if (sampler_.n_fg == 0 && sampler_.n_bg == 0 && sampler_.samples_per_side == 0) {
    const int bins = sampler_.histogram_bins;
    sampler_ = SamplerConfig::defaults_for(decoded.size());
    sampler_.histogram_bins = bins;
  }
  sampler_.seed = cfg_.seed;
  sampler_.validate(decoded.size());

  // Pseudo-labels live on the decoded grid. Images without a CAM fail at train_step.
  for (const Sample& s : train_) {
    if (s.cam.size() == 0)
      pooled_cams_.emplace_back();
    else
      pooled_cams_.push_back(to_patch_grid(s.cam, decoded.rows, decoded.cols));
  }
}

Index Trainer::steps_per_epoch() const {
  const auto n = static_cast<Index>(train_.size());
  return (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

std::int64_t Trainer::total_steps() const {
  const std::int64_t by_epochs = static_cast<std::int64_t>(cfg_.epochs) * steps_per_epoch();
  return cfg_.max_steps > 0 ? std::min<std::int64_t>(by_epochs, cfg_.max_steps) : by_epochs;
}

TrainState Trainer::initial_state() const {
  TrainState s;
  Rng init(cfg_.seed);
  s.params = ModelParameters<double>::initialize(model_, init);
  s.momentum = ModelParameters<double>::zeros(model_);
  s.best_params = s.params;
  s.rng = Rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

std::vector<Index> Trainer::next_batch(TrainState& state) const {
  const auto n = static_cast<Index>(train_.size());
  if (state.cursor == 0 || static_cast<Index>(state.order.size()) != n) {
    state.order.resize(static_cast<std::size_t>(n));
    std::iota(state.order.begin(), state.order.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(state.rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(state.order[static_cast<std::size_t>(i)], state.order[static_cast<std::size_t>(j)]);
    }
    state.cursor = 0;
  }
  const Index end = std::min(n, state.cursor + cfg_.batch_size);
  std::vector<Index> batch(state.order.begin() + state.cursor, state.order.begin() + end);
  state.cursor = end;
  return batch;
}

namespace {

struct BatchObjective {
  LossBreakdown losses;
  Vector<double> grad;
};

}  // namespace

static BatchObjective batch_objective(const Trainer& t, const std::vector<EncoderOutput<double>>& inputs,
                                      const std::vector<Eigen::MatrixXd>& cams,
                                      const std::vector<Sample>& samples,
                                      const ModelParameters<double>& params,
                                      const std::vector<Index>& batch, Rng& rng) {
  if (batch.empty()) throw Error(ErrorCode::InvalidConfig, "empty batch");
  // Sampling draws from the shared generator in batch order before any parallel work.
  std::vector<SampledPatchSet> sampled;
  for (Index i : batch) {
    if (i < 0 || i >= static_cast<Index>(samples.size()))
      throw Error(ErrorCode::InvalidConfig, "batch index out of range");
    const auto at = static_cast<std::size_t>(i);
    if (cams[at].size() == 0) throw Error(ErrorCode::MissingCam, "no CAM for image " + samples[at].id);
    sampled.push_back(sample_fg_bg(cams[at], t.sampler(), rng));
  }
  const LossOptions opts = t.config().loss_options();
  std::vector<ObjectiveResult<double>> results(batch.size());
  parallel_for(batch.size(), t.config().jobs, [&](std::size_t j) {
    const auto at = static_cast<std::size_t>(batch[j]);
    results[j] = objective(inputs[at], params, sampled[j], samples[at].label, t.anchors(), t.model(),
                           t.config().weights, opts);
  });

  BatchObjective out;
  out.grad = Vector<double>::Zero(params.size());
  for (const auto& r : results) {
    out.losses.l_kd += r.losses.l_kd;
    out.losses.p_cl += r.losses.p_cl;
    out.losses.i_cl += r.losses.i_cl;
    out.losses.total += r.losses.total;
    out.grad += r.grad.flatten();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.losses.l_kd *= inv;
  out.losses.p_cl *= inv;
  out.losses.i_cl *= inv;
  out.losses.total *= inv;
  out.grad *= inv;
  return out;
}

LossBreakdown Trainer::batch_loss(const ModelParameters<double>& params, const std::vector<Index>& batch,
                                  Rng& rng) const {
  return batch_objective(*this, train_inputs_, pooled_cams_, train_, params, batch, rng).losses;
}

LossBreakdown Trainer::train_step(TrainState& state, const std::vector<Index>& batch) const {
  const BatchObjective b = batch_objective(*this, train_inputs_, pooled_cams_, train_, state.params, batch, state.rng);
  if (!std::isfinite(b.losses.total) || !b.grad.allFinite())
    throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at step " + std::to_string(state.step + 1));

  // SGD with momentum and coupled weight decay.
  Vector<double> p = state.params.flatten();
  Vector<double> buf = state.momentum.flatten();
  const Vector<double> g = b.grad + cfg_.weight_decay * p;
  buf = cfg_.momentum * buf + g;
  p -= cfg_.learning_rate * buf;
  state.params.assign(p);
  state.momentum.assign(buf);
  ++state.step;
  state.history.push_back(b.losses);
  return b.losses;
}

double Trainer::validate(const ModelParameters<double>& params) const {
  return localization_maxboxacc(params, model_, anchors_, val_inputs_, val_, cfg_.eval, cfg_.jobs);
}

void Trainer::fit(TrainState& state, const StepHook& hook) const {
  const std::int64_t total = total_steps();
  const auto n = static_cast<Index>(train_.size());
  while (state.step < total) {
    const std::vector<Index> batch = next_batch(state);
    const LossBreakdown losses = train_step(state, batch);
    bool evaluated = false;
    if (state.cursor >= n) {
      ++state.epoch;
      state.cursor = 0;
      evaluated = true;
    }
    if (state.step == total) evaluated = true;
    if (evaluated) {
      const double metric = validate(state.params);
      state.val_history.push_back(metric);
      if (metric >= state.best_metric) {
        state.best_metric = metric;
        state.best_step = state.step;
        state.best_params = state.params;
      }
    }
    if (hook && !hook(state, losses, evaluated)) return;
  }
}

namespace {

fs::path resolve_anchors(const TrainConfig& cfg, const fs::path& manifest) {
  if (cfg.anchors.empty()) return manifest.parent_path() / "anchors.tdla";
  const fs::path p(cfg.anchors);
  return p;
}

io::Checkpoint make_checkpoint(const Trainer& t, const ModelParameters<double>& params, std::int64_t step,
                               const fs::path& anchors_path, const std::string& anchors_hash) {
  io::Checkpoint c;
  c.model = t.model();
  c.params = params;
  c.anchors_path = fs::absolute(anchors_path).lexically_normal().string();
  c.anchors_hash = anchors_hash;
  c.step = step;
  c.extra["weights"] = weights_json(t.config().weights);
  c.extra["encoder"] = t.config().encoder;
  return c;
}

struct RunResult {
  io::Checkpoint best;
  double metric = 0.0;
};

RunResult run_one(const Trainer& trainer, const fs::path& out, const fs::path& anchors_path,
                  const std::string& anchors_hash, const std::optional<fs::path>& resume) {
  fs::create_directories(out);
  TrainState state = resume ? TrainState::load(*resume) : trainer.initial_state();
  if (!(state.params.size() == trainer.initial_state().params.size()))
    throw Error(ErrorCode::FormatError, "training state does not match the model");

  const fs::path log_path = out / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw Error(ErrorCode::IoError, "cannot write " + log_path.string());
  const double lr = trainer.config().learning_rate;
  auto log_line = [&](std::int64_t step, const LossBreakdown& l) {
    nlohmann::json j = loss_json(l);
    j["step"] = step;
    j["lr"] = lr;
    log << j.dump() << '\n';
  };
  for (std::size_t i = 0; i < state.history.size(); ++i)
    log_line(static_cast<std::int64_t>(i + 1), state.history[i]);
  log.flush();

  const Index state_every = trainer.config().state_every;
  trainer.fit(state, [&](const TrainState& s, const LossBreakdown& l, bool evaluated) {
    log_line(s.step, l);
    if (evaluated) {
      // A run ending mid-epoch gets one extra checkpoint for that partial epoch.
      std::ostringstream name;
      name << "checkpoint_epoch_" << std::setw(3) << std::setfill('0') << s.epoch << (s.cursor == 0 ? "" : "_partial")
           << ".tdlc";
      io::Checkpoint c = make_checkpoint(trainer, s.params, s.step, anchors_path, anchors_hash);
      c.extra["epoch"] = s.epoch;
      c.extra["val_maxboxacc"] = s.val_history.back();
      io::write_checkpoint(out / name.str(), c);
      log.flush();
    }
    if (evaluated || (state_every > 0 && s.step % state_every == 0)) s.save(out / "state.tdlc");
    return true;
  });
  log.flush();
  state.save(out / "state.tdlc");

  RunResult r;
  r.best = make_checkpoint(trainer, state.best_params, state.best_step, anchors_path, anchors_hash);
  r.best.extra["val_maxboxacc"] = state.best_metric;
  r.metric = state.best_metric;
  io::write_checkpoint(out / "model.tdlc", r.best);
  return r;
}

}  // namespace

TrainOutcome train(const fs::path& manifest, const TrainConfig& cfg, const fs::path& out_dir,
                   const std::optional<fs::path>& resume) {
  cfg.validate();
  const std::vector<Sample> samples = load_samples(manifest);
  std::vector<Sample> train_set = select_split(samples, "train");
  std::vector<Sample> val_set = select_split(samples, "val");
  if (train_set.empty()) throw Error(ErrorCode::InvalidManifest, "manifest has no training images");

  const fs::path anchors_path = resolve_anchors(cfg, manifest);
  const AnchorSet<double> anchors = io::load_anchors(anchors_path);
  const std::string anchors_hash = io::file_hash(anchors_path);
  const auto encoder = make_encoder(cfg.encoder);

  TrainOutcome outcome;
  if (cfg.lambda_grid.empty()) {
    const Trainer trainer(cfg, anchors, std::move(train_set), std::move(val_set), *encoder);
    RunResult r = run_one(trainer, out_dir, anchors_path, anchors_hash, resume);
    outcome.best = std::move(r.best);
    outcome.best_metric = r.metric;
    outcome.weights = cfg.weights;
    outcome.checkpoint_path = out_dir / "model.tdlc";
    return outcome;
  }

  if (resume) throw Error(ErrorCode::InvalidConfig, "resume is not supported with a lambda grid");
  outcome.best_metric = -1.0;
  for (std::size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
    TrainConfig one = cfg;
    one.weights = cfg.lambda_grid[i];
    one.lambda_grid.clear();
    std::ostringstream name;
    name << "lambda_" << std::setw(2) << std::setfill('0') << i;
    const Trainer trainer(one, anchors, train_set, val_set, *encoder);
    RunResult r = run_one(trainer, out_dir / name.str(), anchors_path, anchors_hash, std::nullopt);
    if (r.metric > outcome.best_metric) {
      outcome.best = std::move(r.best);
      outcome.best_metric = r.metric;
      outcome.weights = one.weights;
    }
  }
  outcome.best.extra["lambda_grid"] = nlohmann::json::array();
  for (const LossWeights& w : cfg.lambda_grid) outcome.best.extra["lambda_grid"].push_back(weights_json(w));
  outcome.checkpoint_path = out_dir / "model.tdlc";
  io::write_checkpoint(outcome.checkpoint_path, outcome.best);
  return outcome;
}

}  // namespace tdl
