#include "tbd/detector.hpp"

#include <cmath>
#include <stdexcept>

#include "tbd/rng.hpp"

namespace tbd::toy {

namespace {

std::string level_key(const char* head, int level, const char* leaf) {
  return std::string("head.") + head + "." + std::to_string(level) + "." + leaf;
}

Grid uniform_grid(Shape s, double bound, Rng& rng) {
  Grid g(s);
  for (auto& v : g.values()) v = rng.uniform(-bound, bound);
  return g;
}

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

int DetectorConfig::level_size(int level) const {
  return static_cast<int>(std::lround(extent / (stride * (1 << level))));
}

geometry::AnchorGrid DetectorConfig::anchors(int level) const {
  return geometry::AnchorGrid::covering(level, extent, stride * (1 << level));
}

void DetectorConfig::validate() const {
  if (classes < 1) throw std::invalid_argument("detector: classes must be positive");
  if (width < 1) throw std::invalid_argument("detector: width must be positive");
  if (context_radius < 0) throw std::invalid_argument("detector: context radius must be non-negative");
  if (level_size(0) % 2 != 0) throw std::invalid_argument("detector: level-0 grid must be even for pooling");
  for (int l = 0; l < kLevels; ++l) anchors(l);
}

DetectorNet::DetectorNet(DetectorConfig config, ParameterSet params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const int w = config_.width;
  auto expect = [&](const std::string& name, Shape s) {
    if (!params_.contains(name)) throw std::invalid_argument("detector: missing tensor '" + name + "'");
    if (!(params_.get(name).shape() == s)) {
      throw std::invalid_argument("detector: tensor '" + name + "' has shape " + params_.get(name).shape().str() +
                                  ", expected " + s.str());
    }
  };
  expect("backbone.0.w", {w, config_.input_channels(), 1});
  expect("backbone.0.b", {1, 1, w});
  expect("backbone.1.w", {w, w, 1});
  expect("backbone.1.b", {1, 1, w});
  for (int l = 0; l < kLevels; ++l) {
    expect(level_key("cls", l, "w"), {config_.classes, w, 1});
    expect(level_key("cls", l, "b"), {1, 1, config_.classes});
    expect(level_key("reg", l, "w"), {4, w, 1});
    expect(level_key("reg", l, "b"), {1, 1, 4});
  }
  if (params_.size() != 4 + 4 * kLevels) throw std::invalid_argument("detector: unexpected extra tensors");
}

DetectorNet DetectorNet::create(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int w = config.width;
  const int in = config.input_channels();
  ParameterSet p;
  p.add("backbone.0.w", uniform_grid({w, in, 1}, std::sqrt(3.0 / in), rng));
  p.add("backbone.0.b", Grid(1, 1, w, 0.0));
  p.add("backbone.1.w", uniform_grid({w, w, 1}, std::sqrt(3.0 / w), rng));
  p.add("backbone.1.b", Grid(1, 1, w, 0.0));
  for (int l = 0; l < kLevels; ++l) {
    p.add(level_key("cls", l, "w"), uniform_grid({config.classes, w, 1}, std::sqrt(3.0 / w), rng));
    p.add(level_key("cls", l, "b"), Grid(1, 1, config.classes, -2.0));
    p.add(level_key("reg", l, "w"), uniform_grid({4, w, 1}, 0.1 * std::sqrt(3.0 / w), rng));
    p.add(level_key("reg", l, "b"), Grid(1, 1, 4, softplus_inverse(1.5)));
  }
  return DetectorNet(config, std::move(p));
}

Grid gather_context(const Grid& input, int radius) {
  const int n_r = input.rows();
  const int n_c = input.cols();
  const int ch = input.channels();
  const int side = 2 * radius + 1;
  Grid out(n_r, n_c, ch * side * side, 0.0);
  for (int r = 0; r < n_r; ++r) {
    for (int c = 0; c < n_c; ++c) {
      int k = 0;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          const bool inside = rr >= 0 && rr < n_r && cc >= 0 && cc < n_c;
          for (int q = 0; q < ch; ++q, ++k) out(r, c, k) = inside ? input(rr, cc, q) : 0.0;
        }
      }
    }
  }
  return out;
}

std::vector<LevelOutput> forward(const DetectorConfig& config, const std::map<std::string, ad::Var>& params,
                                 const Grid& context, ad::Graph& graph) {
  auto p = [&](const std::string& name) { return params.at(name); };
  ad::Var x = graph.constant(context);
  ad::Var f0 = ad::tanh(ad::affine(x, p("backbone.0.w"), p("backbone.0.b")));
  ad::Var f1 = ad::tanh(ad::affine(ad::avg_pool(f0, 2), p("backbone.1.w"), p("backbone.1.b")));
  std::vector<LevelOutput> out;
  const ad::Var feats[kLevels] = {f0, f1};
  for (int l = 0; l < kLevels; ++l) {
    LevelOutput o;
    o.level = l;
    o.anchors = config.anchors(l);
    o.features = feats[l];
    o.logits = ad::affine(feats[l], p(level_key("cls", l, "w")), p(level_key("cls", l, "b")));
    o.offsets = ad::affine(feats[l], p(level_key("reg", l, "w")), p(level_key("reg", l, "b")));
    out.push_back(o);
  }
  return out;
}

std::vector<LevelOutput> forward(const DetectorNet& net, const SyntheticScene& scene, ad::Graph& graph,
                                 bool trainable, const std::string& prefix) {
  const auto& cfg = net.config();
  if (scene.input.rows() != cfg.level_size(0) || scene.input.channels() != cfg.classes) {
    throw std::invalid_argument("forward: scene input " + scene.input.shape().str() +
                                " does not match the detector configuration");
  }
  auto params = net.parameters().bind(graph, prefix, trainable);
  return forward(cfg, params, gather_context(scene.input, cfg.context_radius), graph);
}

ad::Var detector_loss(std::span<const LevelOutput> levels, const geometry::GroundTruthSet& truth) {
  if (levels.empty()) throw std::invalid_argument("detector_loss: no levels");
  ad::Graph& g = *levels.front().logits.graph;
  double cls_count = 0.0;
  double positives = 0.0;
  ad::Var cls_sum = g.constant(0.0);
  ad::Var reg_sum = g.constant(0.0);

  for (const LevelOutput& lvl : levels) {
    const Shape& s = lvl.logits.shape();
    Grid target(s.rows, s.cols, s.channels, 0.0);
    Grid mask(s.rows, s.cols, 1, 0.0);
    Grid tx1(s.rows, s.cols, 1, 0.0), ty1(s.rows, s.cols, 1, 0.0);
    Grid tx2(s.rows, s.cols, 1, 1.0), ty2(s.rows, s.cols, 1, 1.0);
    const Grid& off = lvl.offsets.value();
    for (int r = 0; r < s.rows; ++r) {
      for (int c = 0; c < s.cols; ++c) {
        const geometry::Point centre = lvl.anchors.center(r, c);
        const geometry::BBox pred = geometry::decode(
            {off(r, c, 0), off(r, c, 1), off(r, c, 2), off(r, c, 3)}, centre, lvl.anchors.stride);
        int assigned = -1;
        double best = -1.0;
        for (std::size_t k = 0; k < truth.size(); ++k) {
          const auto& gt = truth.objects[k];
          if (!gt.box.contains(centre)) continue;
          target(r, c, gt.label) = 1.0;
          const double v = geometry::iou(pred, gt.box);
          if (v > best) {
            best = v;
            assigned = static_cast<int>(k);
          }
        }
        if (assigned >= 0) {
          const auto& box = truth.objects[static_cast<std::size_t>(assigned)].box;
          mask(r, c) = 1.0;
          tx1(r, c) = box.x1;
          ty1(r, c) = box.y1;
          tx2(r, c) = box.x2;
          ty2(r, c) = box.y2;
        }
      }
    }
    // BCE with logits: softplus(z) - y z.
    cls_sum = cls_sum + ad::sum(ad::softplus(lvl.logits) - lvl.logits * g.constant(target));
    cls_count += static_cast<double>(target.size());

    const double level_pos = mask.sum();
    if (level_pos > 0.0) {
      const geometry::BoxVars pred = geometry::decode(lvl.offsets, lvl.anchors);
      const geometry::BoxVars tgt{g.constant(tx1), g.constant(ty1), g.constant(tx2), g.constant(ty2)};
      reg_sum = reg_sum + ad::sum(g.constant(mask) * (1.0 - geometry::iou(pred, tgt)));
      positives += level_pos;
    }
  }
  ad::Var loss = cls_sum / cls_count;
  if (positives > 0.0) loss = loss + reg_sum / positives;
  return loss;
}

std::vector<LevelValues> predict_levels(const DetectorNet& net, const SyntheticScene& scene) {
  ad::Graph g;
  auto levels = forward(net, scene, g, false);
  std::vector<LevelValues> out;
  for (const auto& l : levels) out.push_back({l.anchors, l.features.value(), l.logits.value(), l.offsets.value()});
  return out;
}

std::vector<geometry::Detection> candidates(std::span<const LevelValues> levels, double score_floor) {
  std::vector<geometry::Detection> out;
  for (const auto& l : levels) {
    for (int r = 0; r < l.logits.rows(); ++r) {
      for (int c = 0; c < l.logits.cols(); ++c) {
        int label = 0;
        for (int k = 1; k < l.logits.channels(); ++k) {
          if (l.logits(r, c, k) > l.logits(r, c, label)) label = k;
        }
        const double score = 1.0 / (1.0 + std::exp(-l.logits(r, c, label)));
        if (score < score_floor) continue;
        const geometry::BBox box = geometry::decode(
            {l.offsets(r, c, 0), l.offsets(r, c, 1), l.offsets(r, c, 2), l.offsets(r, c, 3)},
            l.anchors.center(r, c), l.anchors.stride);
        out.push_back({box, score, label});
      }
    }
  }
  return out;
}

std::vector<geometry::Detection> detect(const DetectorNet& net, const SyntheticScene& scene, double score_floor,
                                        double nms_iou) {
  const auto levels = predict_levels(net, scene);
  return geometry::nms_select(candidates(levels, score_floor), nms_iou);
}

}  // namespace tbd::toy
