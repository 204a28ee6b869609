#include "dasam/evaluation/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "dasam/error.hpp"
#include "dasam/model/accounting.hpp"

namespace dasam::evaluation {

using json = nlohmann::json;

void BenchmarkConfig::validate() const {
  std::vector<std::string> bad;
  if (trials < 3) bad.push_back("bench.trials: must be >= 3");
  if (images_per_trial < 1) bad.push_back("bench.images_per_trial: must be >= 1");
  if (warmup < 0) bad.push_back("bench.warmup: must be >= 0");
  if (height < 0 || width < 0) bad.push_back("bench.height/width: must be >= 0");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

namespace {

struct Inputs {
  std::vector<torch::Tensor> rgb, depth;
  model::PromptSet prompt;
};

Inputs make_inputs(int h, int w, int n, std::uint64_t seed) {
  Inputs in;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (int i = 0; i < n; ++i) {
    in.rgb.push_back(torch::rand({1, 3, h, w}, gen));
    in.depth.push_back(torch::rand({1, 1, h, w}, gen).expand({1, 3, h, w}).contiguous());
  }
  in.prompt.points.push_back({w / 2.0, h / 2.0, model::PointLabel::foreground});
  return in;
}

// Seconds for one pass over the inputs.
double time_pass(model::SegmentationModel& m, const Inputs& in, int h, int w) {
  torch::NoGradGuard ng;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < in.rgb.size(); ++i) {
    auto emb = m->embed(in.rgb[i], m->depth_aware() ? in.depth[i] : torch::Tensor());
    auto pred = m->predict(emb, in.prompt, h, w);
    (void)pred;
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ThroughputResult describe(model::SegmentationModel& m, int h, int w) {
  ThroughputResult r;
  r.variant = model::to_string(m->variant());
  r.parameters = model::count_parameters(*m);
  r.macs = model::estimate_macs(m, h, w);
  return r;
}

std::pair<int, int> resolve_shape(const model::ModelConfig& c, const BenchmarkConfig& b) {
  return {b.height ? b.height : c.image_size, b.width ? b.width : c.image_size};
}

}  // namespace

ThroughputResult benchmark_throughput(model::SegmentationModel& m, int height, int width,
                                      const BenchmarkConfig& config) {
  config.validate();
  m->eval();
  auto r = describe(m, height, width);
  const auto in = make_inputs(height, width, config.images_per_trial, config.seed);
  for (int i = 0; i < config.warmup; ++i) time_pass(m, in, height, width);
  for (int t = 0; t < config.trials; ++t) r.trial_images_per_second.push_back(config.images_per_trial / time_pass(m, in, height, width));
  r.images_per_second = median(r.trial_images_per_second);
  return r;
}

BenchmarkReport compare_variants(model::SegmentationModel& rgb_only, model::SegmentationModel& depth_aware,
                                 const BenchmarkConfig& bench) {
  bench.validate();
  if (rgb_only->depth_aware() || !depth_aware->depth_aware()) {
    throw ContractViolation("compare_variants: expected an rgb_only and a depth_aware model");
  }
  BenchmarkReport rep;
  rep.preset = depth_aware->config().preset;
  std::tie(rep.height, rep.width) = resolve_shape(depth_aware->config(), bench);
  const int h = rep.height, w = rep.width;
  rgb_only->eval();
  depth_aware->eval();
  rep.rgb_only = describe(rgb_only, h, w);
  rep.depth_aware = describe(depth_aware, h, w);

  const auto in = make_inputs(h, w, bench.images_per_trial, bench.seed);
  for (int i = 0; i < bench.warmup; ++i) {
    time_pass(rgb_only, in, h, w);
    time_pass(depth_aware, in, h, w);
  }
  for (int t = 0; t < bench.trials; ++t) {
    // Alternate who goes first.
    double a, b;
    if (t % 2 == 0) {
      a = time_pass(rgb_only, in, h, w);
      b = time_pass(depth_aware, in, h, w);
    } else {
      b = time_pass(depth_aware, in, h, w);
      a = time_pass(rgb_only, in, h, w);
    }
    rep.rgb_only.trial_images_per_second.push_back(bench.images_per_trial / a);
    rep.depth_aware.trial_images_per_second.push_back(bench.images_per_trial / b);
  }
  rep.rgb_only.images_per_second = median(rep.rgb_only.trial_images_per_second);
  rep.depth_aware.images_per_second = median(rep.depth_aware.trial_images_per_second);
  rep.parameter_ratio = double(rep.depth_aware.parameters) / double(rep.rgb_only.parameters);
  rep.mac_ratio = double(rep.depth_aware.macs) / double(rep.rgb_only.macs);
  rep.throughput_ratio = rep.depth_aware.images_per_second / rep.rgb_only.images_per_second;
  return rep;
}

BenchmarkReport compare_variants(const model::ModelConfig& config, const BenchmarkConfig& bench) {
  auto rc = config;
  rc.variant = model::Variant::rgb_only;
  auto dc = config;
  dc.variant = model::Variant::depth_aware;
  model::SegmentationModel rgb(rc), dep(dc);
  return compare_variants(rgb, dep, bench);
}

std::string BenchmarkReport::to_text() const {
  std::ostringstream s;
  s << "preset " << preset << ", input " << height << "x" << width << "\n";
  s << std::left << std::setw(14) << "variant" << std::setw(14) << "params" << std::setw(16) << "MACs"
    << "images/s\n";
  for (const auto* r : {&rgb_only, &depth_aware}) {
    s << std::left << std::setw(14) << r->variant << std::setw(14) << r->parameters << std::setw(16) << r->macs
      << std::fixed << std::setprecision(2) << r->images_per_second << "\n";
  }
  s << std::fixed << std::setprecision(3) << "ratios: params " << parameter_ratio << ", MACs " << mac_ratio
    << ", throughput " << throughput_ratio << "\n";
  return s.str();
}

json BenchmarkReport::to_json() const {
  auto v = [](const ThroughputResult& r) {
    return json{{"variant", r.variant},
                {"parameters", r.parameters},
                {"macs", r.macs},
                {"images_per_second", r.images_per_second},
                {"trials", r.trial_images_per_second}};
  };
  return json{{"preset", preset},
              {"height", height},
              {"width", width},
              {"rgb_only", v(rgb_only)},
              {"depth_aware", v(depth_aware)},
              {"parameter_ratio", parameter_ratio},
              {"mac_ratio", mac_ratio},
              {"throughput_ratio", throughput_ratio}};
}

}  // namespace dasam::evaluation
