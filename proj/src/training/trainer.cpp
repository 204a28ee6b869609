#include "dasam/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "dasam/data/depth.hpp"
#include "dasam/data/random.hpp"
#include "dasam/data/sampling.hpp"
#include "dasam/error.hpp"

namespace dasam::training {

using json = nlohmann::json;
using model::EmbedMode;
using model::PointLabel;
using model::PromptBox;
using model::PromptPoint;
using model::PromptSet;

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (stage1_epochs < 0) bad.push_back("train.stage1_epochs: must be >= 0");
  if (stage2_epochs < 0) bad.push_back("train.stage2_epochs: must be >= 0");
  if (batch_size < 1) bad.push_back("train.batch_size: must be >= 1");
  if (masks_per_image < 1) bad.push_back("train.masks_per_image: must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) bad.push_back("train.lr: must be > 0");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) bad.push_back("train.weight_decay: must be >= 0");
  if (!(beta1 > 0 && beta1 < 1)) bad.push_back("train.beta1: must be in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) bad.push_back("train.beta2: must be in (0, 1)");
  if (!(eps > 0)) bad.push_back("train.eps: must be > 0");
  if (!std::isfinite(grad_clip)) bad.push_back("train.grad_clip: must be finite");
  if (!(box_jitter >= 0 && box_jitter < 0.5)) bad.push_back("train.box_jitter: must be in [0, 0.5)");
  if (!(point_prob >= 0 && point_prob <= 1)) bad.push_back("train.point_prob: must be in [0, 1]");
  if (warmup_steps < 0) bad.push_back("train.warmup_steps: must be >= 0");
  try {
    weights.validate();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"stage1_epochs", c.stage1_epochs},
           {"stage2_epochs", c.stage2_epochs},
           {"batch_size", c.batch_size},
           {"masks_per_image", c.masks_per_image},
           {"lr", c.lr},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"eps", c.eps},
           {"grad_clip", c.grad_clip},
           {"box_jitter", c.box_jitter},
           {"point_prob", c.point_prob},
           {"schedule", c.schedule == TrainConfig::Schedule::cosine ? "cosine" : "constant"},
           {"warmup_steps", c.warmup_steps},
           {"seed", c.seed},
           {"objective", c.objective == Objective::full ? "full" : "mask_dice"},
           {"weights", c.weights}};
}

void from_json(const json& j, TrainConfig& c) {
  c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
  c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.masks_per_image = j.value("masks_per_image", c.masks_per_image);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.box_jitter = j.value("box_jitter", c.box_jitter);
  c.point_prob = j.value("point_prob", c.point_prob);
  c.seed = j.value("seed", c.seed);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  if (j.contains("schedule")) {
    const auto v = j.at("schedule").get<std::string>();
    if (v == "constant") {
      c.schedule = TrainConfig::Schedule::constant;
    } else if (v == "cosine") {
      c.schedule = TrainConfig::Schedule::cosine;
    } else {
      throw ConfigError({"train.schedule: expected 'constant' or 'cosine'"});
    }
  }
  if (j.contains("objective")) {
    const auto o = j.at("objective").get<std::string>();
    if (o == "full") {
      c.objective = Objective::full;
    } else if (o == "mask_dice") {
      c.objective = Objective::mask_dice;
    } else {
      throw ConfigError({"train.objective: expected 'full' or 'mask_dice'"});
    }
  }
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
}

void to_json(json& j, const StepRecord& r) {
  j = json{{"stage", r.stage},        {"epoch", r.epoch},          {"step", r.step},
           {"loss", r.loss},          {"alpha", r.alpha},          {"grad_norm", r.grad_norm},
           {"point_prompts", r.point_prompts}, {"box_prompts", r.box_prompts}};
}

std::vector<TensorSample> to_tensor_samples(const std::vector<data::DatasetRecord>& records) {
  std::vector<TensorSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    r.validate();
    out.push_back(TensorSample{r.id, model::image_to_tensor(r.image),
                               model::depth_to_tensor(data::prepare_depth(r.depth)), r.masks});
  }
  return out;
}

double lr_factor(const TrainConfig& c, std::int64_t t, std::int64_t n) {
  double f = 1.0;
  if (c.warmup_steps > 0 && t < c.warmup_steps) f = static_cast<double>(t + 1) / c.warmup_steps;
  if (c.schedule == TrainConfig::Schedule::cosine && n > 0) {
    f *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(n)));
  }
  return f;
}

std::unique_ptr<torch::optim::AdamW> make_optimizer(const std::vector<torch::Tensor>& params, const TrainConfig& c) {
  std::vector<torch::Tensor> decay, no_decay;
  for (const auto& p : params) (p.dim() >= 2 ? decay : no_decay).push_back(p);
  auto opts = [&](double wd) {
    return std::make_unique<torch::optim::AdamWOptions>(torch::optim::AdamWOptions(c.lr)
                                                            .betas({c.beta1, c.beta2})
                                                            .eps(c.eps)
                                                            .weight_decay(wd));
  };
  std::vector<torch::optim::OptimizerParamGroup> groups;
  if (!decay.empty()) groups.emplace_back(decay, opts(c.weight_decay));
  if (!no_decay.empty()) groups.emplace_back(no_decay, opts(0.0));
  if (groups.empty()) throw ContractViolation("make_optimizer: no parameters");
  return std::make_unique<torch::optim::AdamW>(
      std::move(groups),
      torch::optim::AdamWOptions(c.lr).betas({c.beta1, c.beta2}).eps(c.eps).weight_decay(c.weight_decay));
}

double clip_global_norm(const std::vector<torch::Tensor>& params, double max_norm) {
  torch::NoGradGuard ng;
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.grad().defined()) continue;
    sq += p.grad().to(torch::kFloat64).pow(2).sum().item<double>();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (const auto& p : params) {
      if (p.grad().defined()) p.grad().mul_(scale);
    }
  }
  return norm;
}

std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = c.numel() * static_cast<std::int64_t>(c.element_size());
    for (std::int64_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string fingerprint(const json& j) {
  const auto s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json run_fingerprint_doc(const model::ModelConfig& m, const TrainConfig& t) { return json{{"model", m}, {"train", t}}; }

torch::Tensor mask_tensor(const data::InstanceMask& m) {
  auto bits = m.bits();
  return torch::from_blob(const_cast<std::uint8_t*>(bits.data()), {m.height(), m.width()}, torch::kUInt8)
      .to(torch::kFloat32);
}

/// Uniformly random foreground pixel.
PromptPoint random_interior_point(const data::InstanceMask& m, Rng& rng) {
  const auto target = uniform_int(rng, 0, m.area() - 1);
  std::int64_t seen = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(y, x) && seen++ == target) return PromptPoint{double(x), double(y), PointLabel::foreground};
  throw ContractViolation("random_interior_point: empty mask");
}

PromptBox jittered_box(const data::InstanceMask& m, double jitter, Rng& rng) {
  const auto b = m.bbox();
  const double bw = b.width(), bh = b.height();
  PromptBox box{b.x_min + uniform(rng, -jitter, jitter) * bw, b.y_min + uniform(rng, -jitter, jitter) * bh,
                b.x_max + uniform(rng, -jitter, jitter) * bw, b.y_max + uniform(rng, -jitter, jitter) * bh};
  box.x_min = std::clamp(box.x_min, 0.0, double(m.width()) - 1.0);
  box.y_min = std::clamp(box.y_min, 0.0, double(m.height()) - 1.0);
  box.x_max = std::clamp(box.x_max, box.x_min + 1.0, double(m.width()));
  box.y_max = std::clamp(box.y_max, box.y_min + 1.0, double(m.height()));
  return box;
}

}  // namespace

Trainer::Trainer(model::SegmentationModel model, std::vector<TensorSample> data, TrainConfig config)
    : model_(std::move(model)), data_(std::move(data)), config_(std::move(config)) {
  config_.validate();
  if (data_.empty()) throw ContractViolation("train: the dataset is empty");
  const auto h = data_[0].rgb.size(1), w = data_[0].rgb.size(2);
  for (const auto& s : data_) {
    if (s.rgb.size(1) != h || s.rgb.size(2) != w) {
      throw ContractViolation("train: every training image must have the same size (" + s.id + " differs)");
    }
    if (s.masks.empty()) throw ContractViolation("train: record " + s.id + " has no masks");
  }
}

std::int64_t Trainer::steps_per_epoch() const noexcept {
  return (static_cast<std::int64_t>(data_.size()) + config_.batch_size - 1) / config_.batch_size;
}

std::int64_t Trainer::stage1_steps() const noexcept {
  return model_->depth_aware() ? config_.stage1_epochs * steps_per_epoch() : 0;
}

std::int64_t Trainer::total_steps() const noexcept { return stage1_steps() + config_.stage2_epochs * steps_per_epoch(); }

int Trainer::stage() const noexcept { return step_ < stage1_steps() ? 1 : 2; }

void Trainer::prepare_stage(int stage) {
  if (prepared_stage_ == stage) return;
  for (auto& p : model_->parameters()) p.set_requires_grad(stage == 2);
  if (stage == 1) {
    trainable_ = model_->depth_encoder_parameters();
    for (auto& p : trainable_) p.set_requires_grad(true);
  } else {
    trainable_ = model_->parameters();
  }
  optimizer_ = make_optimizer(trainable_, config_);
  prepared_stage_ = stage;
}

StepRecord Trainer::step() {
  if (done()) throw ContractViolation("train: schedule already complete");
  const int st = stage();
  prepare_stage(st);
  const auto spe = steps_per_epoch();
  const auto local = st == 1 ? step_ : step_ - stage1_steps();
  const int epoch = static_cast<int>(local / spe);
  const auto batch_no = local % spe;

  // Epoch order.
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle(mix_seed({config_.seed, static_cast<std::uint64_t>(st), static_cast<std::uint64_t>(epoch), 0x5eedULL}));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(shuffle, 0, static_cast<std::int64_t>(i) - 1))]);
  }
  const auto begin = static_cast<std::size_t>(batch_no * config_.batch_size);
  const auto end = std::min(order.size(), begin + static_cast<std::size_t>(config_.batch_size));

  StepRecord rec;
  rec.stage = st;
  rec.epoch = epoch;
  rec.step = step_;

  std::vector<torch::Tensor> rgb, depth, gt;
  std::vector<std::int64_t> image_index;
  std::vector<PromptSet> prompts;
  std::vector<double> weight;
  const double n_images = static_cast<double>(end - begin);
  for (std::size_t k = begin; k < end; ++k) {
    const auto& s = data_[order[k]];
    Rng rng(mix_seed({config_.seed, static_cast<std::uint64_t>(st), static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(step_), static_cast<std::uint64_t>(order[k])}));
    const auto picks = data::sample_mask_indices(s.masks.size(), config_.masks_per_image, rng);
    for (auto m : picks) {
      const auto& mask = s.masks[m];
      PromptSet p;
      if (bernoulli(rng, config_.point_prob)) {
        p.points.push_back(random_interior_point(mask, rng));
        ++rec.point_prompts;
      } else {
        p.boxes.push_back(jittered_box(mask, config_.box_jitter, rng));
        ++rec.box_prompts;
      }
      prompts.push_back(std::move(p));
      image_index.push_back(static_cast<std::int64_t>(rgb.size()));
      gt.push_back(mask_tensor(mask));
      weight.push_back(1.0 / (n_images * static_cast<double>(picks.size())));
    }
    rgb.push_back(s.rgb);
    depth.push_back(s.depth);
  }

  const int height = static_cast<int>(rgb[0].size(1)), width = static_cast<int>(rgb[0].size(2));
  auto rgb_b = torch::stack(rgb, 0), depth_b = torch::stack(depth, 0);
  auto emb = st == 1 ? model_->embed(rgb_b, depth_b, EmbedMode::depth_only) : model_->embed(rgb_b, depth_b);
  auto out = model_->decode(emb.grid, image_index, prompts, height, width);
  auto gt_b = torch::stack(gt, 0);
  auto w = torch::tensor(weight, torch::kFloat32);

  const auto& lw = config_.weights;
  auto mask_t = (losses::mask_bce_per_mask(out.logits, gt_b) * w).sum();
  auto dice_t = (losses::dice_per_mask(out.logits, gt_b) * w).sum();
  auto total = lw.mask * mask_t + lw.dice * dice_t;
  double iou = 0, direct = 0, aux = 0;
  if (st == 2 && config_.objective == Objective::full) {
    // A zero weight drops the term from the graph: parameters only it reaches
    // get no gradient, so AdamW leaves them alone as in a mask_dice run.
    if (lw.iou != 0.0) {
      auto iou_t = (losses::iou_regression_per_mask(out.predicted_iou, out.logits, gt_b) * w).sum();
      total = total + lw.iou * iou_t;
      iou = iou_t.item<double>();
    }
    if (lw.direct != 0.0) {
      auto direct_t = (losses::direct_supervision_per_mask({out.direct_logits}, gt_b) * w).sum();
      total = total + lw.direct * direct_t;
      direct = direct_t.item<double>();
    }
    if (lw.aux != 0.0) {
      auto aux_t = (losses::boundary_aux_per_mask(out.logits, gt_b) * w).sum();
      total = total + lw.aux * aux_t;
      aux = aux_t.item<double>();
    }
  }
  const auto eff = st == 2 && config_.objective == Objective::full
                       ? lw
                       : losses::LossWeights{lw.mask, lw.dice, 0.0, 0.0, 0.0};
  rec.loss = losses::total_loss(mask_t.item<double>(), dice_t.item<double>(), iou, direct, aux, eff);
  if (!std::isfinite(total.item<double>()) || !std::isfinite(rec.loss.total)) {
    throw TrainingDiverged("training diverged at step " + std::to_string(step_) + ": loss is not finite");
  }

  const auto stage_steps = st == 1 ? stage1_steps() : total_steps() - stage1_steps();
  const double lr = config_.lr * lr_factor(config_, local, stage_steps);
  for (auto& g : optimizer_->param_groups()) static_cast<torch::optim::AdamWOptions&>(g.options()).lr(lr);

  optimizer_->zero_grad();
  total.backward();
  rec.grad_norm = clip_global_norm(trainable_, config_.grad_clip);
  optimizer_->step();
  rec.alpha = model_->alpha_value();
  ++step_;
  return rec;
}

void Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  while (!done()) {
    auto r = step();
    if (on_step) on_step(r);
  }
}

void Trainer::finish_stage(const std::function<void(const StepRecord&)>& on_step) {
  const int st = stage();
  while (!done() && stage() == st) {
    auto r = step();
    if (on_step) on_step(r);
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) {
  torch::serialize::OutputArchive ar;
  ar.write("format_version", torch::tensor(static_cast<std::int64_t>(kCheckpointVersion)));
  ar.write("model_config", c10::IValue(json(model_->config()).dump()));
  ar.write("train_config", c10::IValue(json(config_).dump()));
  ar.write("fingerprint", c10::IValue(fingerprint(run_fingerprint_doc(model_->config(), config_))));
  ar.write("step", torch::tensor(step_));
  ar.write("optimizer_stage", torch::tensor(static_cast<std::int64_t>(prepared_stage_)));
  torch::serialize::OutputArchive weights;
  model_->save(weights);
  ar.write("model", weights);
  if (optimizer_) {
    torch::serialize::OutputArchive opt;
    optimizer_->save(opt);
    ar.write("optimizer", opt);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ar.save_to(path.string());
}

namespace {

struct RawCheckpoint {
  torch::serialize::InputArchive ar;
  model::ModelConfig model_config;
  TrainConfig train_config;
  std::string fingerprint;
  std::int64_t step = 0;
  int optimizer_stage = 0;
};

void read_checkpoint(const std::filesystem::path& path, RawCheckpoint& raw) {
  if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
  try {
    raw.ar.load_from(path.string());
  } catch (const c10::Error& e) {
    throw Error("cannot read checkpoint " + path.string() + ": not a checkpoint file");
  }
  torch::Tensor version;
  if (!raw.ar.try_read("format_version", version)) throw CheckpointVersionError(0, kCheckpointVersion);
  const int found = static_cast<int>(version.item<std::int64_t>());
  if (found != kCheckpointVersion) throw CheckpointVersionError(found, kCheckpointVersion);
  c10::IValue v;
  raw.ar.read("model_config", v);
  raw.model_config = json::parse(v.toStringRef()).get<model::ModelConfig>();
  raw.ar.read("train_config", v);
  raw.train_config = json::parse(v.toStringRef()).get<TrainConfig>();
  raw.ar.read("fingerprint", v);
  raw.fingerprint = v.toStringRef();
  torch::Tensor t;
  raw.ar.read("step", t);
  raw.step = t.item<std::int64_t>();
  raw.ar.read("optimizer_stage", t);
  raw.optimizer_stage = static_cast<int>(t.item<std::int64_t>());
}

}  // namespace

Trainer Trainer::resume(const std::filesystem::path& checkpoint, std::vector<TensorSample> data) {
  RawCheckpoint raw;
  read_checkpoint(checkpoint, raw);
  model::SegmentationModel m(raw.model_config);
  torch::serialize::InputArchive weights;
  raw.ar.read("model", weights);
  m->load(weights);
  Trainer t(m, std::move(data), raw.train_config);
  t.step_ = raw.step;
  if (!t.done() && raw.optimizer_stage == t.stage()) {
    t.prepare_stage(t.stage());
    torch::serialize::InputArchive opt;
    if (raw.ar.try_read("optimizer", opt)) t.optimizer_->load(opt);
  }
  return t;
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  RawCheckpoint raw;
  read_checkpoint(checkpoint, raw);
  LoadedModel out;
  out.model = model::SegmentationModel(raw.model_config);
  torch::serialize::InputArchive weights;
  raw.ar.read("model", weights);
  out.model->load(weights);
  out.model->eval();
  for (auto& p : out.model->parameters()) p.set_requires_grad(false);
  out.train_config = raw.train_config;
  out.step = raw.step;
  out.fingerprint = raw.fingerprint;
  return out;
}

JsonlLog::JsonlLog(const std::filesystem::path& path) : path_(path) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream(path_, std::ios::trunc);
}

void JsonlLog::write(const json& j) {
  std::ofstream out(path_, std::ios::app);
  out << j.dump() << '\n';
}

}  // namespace dasam::training
