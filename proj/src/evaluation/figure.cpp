#include "dasam/evaluation/figure.hpp"

#include <fstream>

#include "dasam/data/dataset_io.hpp"
#include "dasam/data/depth.hpp"
#include "dasam/error.hpp"

namespace dasam::evaluation {

std::array<float, 3> variant_color(std::size_t index) {
  static constexpr std::array<std::array<float, 3>, 4> palette{{
      {1.0f, 0.2f, 0.2f},
      {0.2f, 0.4f, 1.0f},
      {0.2f, 0.85f, 0.3f},
      {1.0f, 0.8f, 0.1f},
  }};
  return palette[index % palette.size()];
}

data::RgbImage compose_comparison_figure(const data::DatasetRecord& record,
                                         const std::vector<std::pair<std::string, data::InstanceMask>>& predictions) {
  if (predictions.empty()) throw ContractViolation("comparison figure needs at least one prediction");
  const auto& img = record.image;
  const int h = img.height, w = img.width;
  for (const auto& [name, m] : predictions) {
    if (m.height() != h || m.width() != w) {
      throw ContractViolation("comparison figure: mask for '" + name + "' does not match the image shape");
    }
  }
  const int panels = 2 + static_cast<int>(predictions.size());
  data::RgbImage out(h, panels * w + (panels - 1) * kPanelGap);
  std::fill(out.pixels.begin(), out.pixels.end(), 1.0f);

  const auto depth = data::prepare_depth(record.depth);
  for (int p = 0; p < panels; ++p) {
    const int x0 = p * (w + kPanelGap);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          float v;
          if (p == 1) {
            v = depth.at(y, x, 0);
          } else {
            v = img.at(y, x, c);
            if (p >= 2 && predictions[static_cast<std::size_t>(p - 2)].second.at(y, x)) {
              v = (1.0f - kOverlayAlpha) * v + kOverlayAlpha * variant_color(static_cast<std::size_t>(p - 2))[c];
            }
          }
          out.at(y, x0 + x, c) = v;
        }
  }
  return out;
}

void emit_comparison_figure(const data::DatasetRecord& record,
                            const std::vector<std::pair<std::string, data::InstanceMask>>& predictions,
                            const std::filesystem::path& out_path) {
  const auto fig = compose_comparison_figure(record, predictions);
  const auto bytes = data::encode_png(fig);
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw Error("cannot write figure to " + out_path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("cannot write figure to " + out_path.string());
}

}  // namespace dasam::evaluation
