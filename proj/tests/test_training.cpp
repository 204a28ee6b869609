#include "support/torch_doctest.hpp"

#include <filesystem>

#include "dasam/data/synthetic.hpp"
#include "dasam/error.hpp"
#include "dasam/training/trainer.hpp"

using namespace dasam;
using namespace dasam::training;
using model::ModelConfig;
using model::SegmentationModel;
using model::Variant;

namespace {

std::vector<TensorSample> scenes(int count, int size = 64, std::uint64_t seed = 0) {
  data::SyntheticSceneConfig c;
  c.height = c.width = size;
  c.max_objects = 3;
  c.max_extent = size / 2;
  c.seed = seed;
  std::vector<data::DatasetRecord> records;
  for (int i = 0; i < count; ++i) records.push_back(data::generate_synthetic_scene(c, static_cast<std::uint64_t>(i)));
  return to_tensor_samples(records);
}

ModelConfig toy(Variant v = Variant::depth_aware) {
  auto c = model::load_preset("toy");
  c.variant = v;
  return c;
}

TrainConfig quick(int s1, int s2) {
  TrainConfig t;
  t.stage1_epochs = s1;
  t.stage2_epochs = s2;
  t.batch_size = 2;
  t.masks_per_image = 2;
  t.lr = 1e-3;
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dasam_test_training";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("adamw takes a descent step on x^2") {
  auto x = torch::ones({1, 1}, torch::kFloat32).set_requires_grad(true);
  TrainConfig c;
  c.lr = 0.1;
  auto opt = make_optimizer({x}, c);
  opt->zero_grad();
  x.pow(2).sum().backward();
  opt->step();
  const double v = x.item<double>();
  CHECK(v < 1.0);
  CHECK(std::abs(v) < 1.0);
}

TEST_CASE("weight decay is decoupled from the gradient") {
  for (double wd : {0.0, 0.1}) {
    auto p = torch::full({2, 2}, 3.0).set_requires_grad(true);
    TrainConfig c;
    c.lr = 0.1;
    c.weight_decay = wd;
    auto opt = make_optimizer({p}, c);
    opt->zero_grad();
    (p * 0.0).sum().backward();  // defined, all-zero gradient
    opt->step();
    if (wd == 0.0) {
      CHECK(p[0][0].item<double>() == 3.0);
    } else {
      CHECK(p[0][0].item<double>() == doctest::Approx(3.0 * (1 - 0.1 * 0.1)));
    }
  }
}

TEST_CASE("global norm clipping") {
  auto a = torch::zeros({2}).set_requires_grad(true), b = torch::zeros({1}).set_requires_grad(true);
  a.mutable_grad() = torch::tensor({3.0f, 0.0f});
  b.mutable_grad() = torch::tensor({4.0f});
  CHECK(clip_global_norm({a, b}, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0].item<double>() == doctest::Approx(0.6).epsilon(1e-5));
  CHECK(b.grad()[0].item<double>() == doctest::Approx(0.8).epsilon(1e-5));
}

TEST_CASE("stage 1 only moves the depth encoder") {
  SegmentationModel m(toy());
  const auto rgb0 = parameter_hash(m->rgb_encoder_parameters());
  const auto dep0 = parameter_hash(m->depth_encoder_parameters());
  const auto head0 = parameter_hash(m->head_parameters());
  const double alpha0 = m->alpha_value();
  Trainer t(m, scenes(4), quick(1, 1));
  CHECK(t.stage() == 1);
  t.step();
  CHECK(parameter_hash(m->rgb_encoder_parameters()) == rgb0);
  CHECK(parameter_hash(m->head_parameters()) == head0);
  CHECK(parameter_hash(m->depth_encoder_parameters()) != dep0);
  CHECK(m->alpha_value() == alpha0);
  t.finish_stage();
  CHECK(t.stage() == 2);
  CHECK(parameter_hash(m->rgb_encoder_parameters()) == rgb0);
  CHECK(parameter_hash(m->head_parameters()) == head0);
  CHECK(m->alpha_value() == alpha0);
  t.step();
  CHECK(m->alpha_value() != alpha0);
  CHECK(parameter_hash(m->rgb_encoder_parameters()) != rgb0);
}

TEST_CASE("rgb_only skips stage 1") {
  SegmentationModel m(toy(Variant::rgb_only));
  Trainer t(m, scenes(3), quick(2, 1));
  CHECK(t.stage1_steps() == 0);
  CHECK(t.total_steps() == 2);
  CHECK(t.stage() == 2);
}

TEST_CASE("equal seeds give bitwise-equal stage-1 depth encoders") {
  auto run = [] {
    SegmentationModel m(toy());
    Trainer t(m, scenes(4), quick(1, 0));
    t.run();
    return parameter_hash(m->depth_encoder_parameters());
  };
  CHECK(run() == run());
}

TEST_CASE("zeroing the auxiliary weights reproduces the BCE+dice trajectory bitwise") {
  auto trajectory = [](Objective objective, bool zero_aux) {
    SegmentationModel m(toy());
    auto c = quick(1, 2);
    c.objective = objective;
    if (zero_aux) c.weights.iou = c.weights.direct = c.weights.aux = 0.0;
    Trainer t(m, scenes(4), c);
    std::vector<double> totals;
    t.run([&](const StepRecord& r) { totals.push_back(r.loss.total); });
    return std::make_pair(totals, parameter_hash(m->parameters()));
  };
  auto a = trajectory(Objective::mask_dice, false);
  auto b = trajectory(Objective::full, true);
  auto full = trajectory(Objective::full, false);
  REQUIRE(a.first.size() == b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) CHECK(a.first[i] == b.first[i]);
  CHECK(a.second == b.second);
  CHECK(full.first.back() != a.first.back());
}

TEST_CASE("checkpoint continuation matches an uninterrupted run") {
  auto data = scenes(4);
  auto c = quick(1, 2);
  std::vector<double> straight;
  {
    SegmentationModel m(toy());
    Trainer t(m, data, c);
    t.run([&](const StepRecord& r) { straight.push_back(r.loss.total); });
  }
  for (std::int64_t cut : {1, 2, 3}) {
    std::vector<double> resumed;
    const auto path = temp_path("cut" + std::to_string(cut) + ".pt");
    {
      SegmentationModel m(toy());
      Trainer t(m, data, c);
      for (std::int64_t i = 0; i < cut; ++i) resumed.push_back(t.step().loss.total);
      t.save_checkpoint(path);
    }
    auto t = Trainer::resume(path, data);
    CHECK(t.global_step() == cut);
    t.run([&](const StepRecord& r) { resumed.push_back(r.loss.total); });
    REQUIRE(resumed.size() == straight.size());
    for (std::size_t i = 0; i < straight.size(); ++i) CHECK(std::abs(resumed[i] - straight[i]) <= 1e-12);
  }
}

TEST_CASE("checkpoint version mismatch is reported") {
  const auto path = temp_path("old.pt");
  torch::serialize::OutputArchive ar;
  ar.write("format_version", torch::tensor(static_cast<std::int64_t>(kCheckpointVersion + 7)));
  ar.save_to(path.string());
  try {
    load_model(path);
    FAIL("expected CheckpointVersionError");
  } catch (const CheckpointVersionError& e) {
    CHECK(e.found() == kCheckpointVersion + 7);
    CHECK(e.expected() == kCheckpointVersion);
  }
}

TEST_CASE("loaded model reproduces the trained model") {
  auto data = scenes(2);
  SegmentationModel m(toy());
  Trainer t(m, data, quick(1, 1));
  t.run();
  const auto path = temp_path("final.pt");
  t.save_checkpoint(path);
  auto loaded = load_model(path);
  CHECK(parameter_hash(loaded.model->parameters()) == parameter_hash(m->parameters()));
  CHECK(loaded.step == t.global_step());
  CHECK(loaded.fingerprint.size() == 16);
}

TEST_CASE("both prompt types are used") {
  SegmentationModel m(toy(Variant::rgb_only));
  auto c = quick(0, 3);
  Trainer t(m, scenes(4), c);
  int points = 0, boxes = 0;
  t.run([&](const StepRecord& r) {
    points += r.point_prompts;
    boxes += r.box_prompts;
  });
  CHECK(points > 0);
  CHECK(boxes > 0);
}

TEST_CASE("overfitting one image lowers the loss") {
  SegmentationModel m(toy(Variant::rgb_only));
  auto c = quick(0, 50);
  c.batch_size = 1;
  Trainer t(m, scenes(1), c);
  std::vector<double> totals;
  t.run([&](const StepRecord& r) { totals.push_back(r.loss.total); });
  REQUIRE(totals.size() == 50);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) {
    first += totals[i];
    last += totals[45 + i];
  }
  CHECK(last < first);
}

TEST_CASE("train config validation lists fields") {
  TrainConfig c;
  c.batch_size = 0;
  c.beta1 = 1.0;
  c.weights.mask = -1;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.fields().size() == 3);
  }
  CHECK_THROWS_AS(Trainer(SegmentationModel(toy()), {}, TrainConfig{}), ContractViolation);
}

TEST_CASE("learning-rate schedule factors") {
  TrainConfig c;
  CHECK(lr_factor(c, 0, 10) == 1.0);
  c.warmup_steps = 4;
  CHECK(lr_factor(c, 0, 10) == doctest::Approx(0.25));
  CHECK(lr_factor(c, 3, 10) == doctest::Approx(1.0));
  c.warmup_steps = 0;
  c.schedule = TrainConfig::Schedule::cosine;
  CHECK(lr_factor(c, 0, 10) == doctest::Approx(1.0));
  CHECK(lr_factor(c, 5, 10) == doctest::Approx(0.5));
  c.warmup_steps = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  nlohmann::json j = c;
  CHECK(j["schedule"] == "cosine");
  j["schedule"] = "step";
  CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
}
