#include "tbd/gradient_suite.hpp"

#include <functional>

#include "tbd/detector.hpp"
#include "tbd/feature_distill.hpp"
#include "tbd/harmony.hpp"
#include "tbd/rng.hpp"
#include "tbd/scene.hpp"
#include "tbd/task_signals.hpp"

namespace tbd {

namespace {

constexpr double kExtent = 32.0;
constexpr int kClasses = 3;

Grid normal_grid(Shape s, double sd, Rng& rng) {
  Grid g(s);
  for (auto& v : g.values()) v = sd * rng.normal();
  return g;
}

Grid unit_grid(Shape s, Rng& rng) {
  Grid g(s);
  for (auto& v : g.values()) v = rng.uniform(0.05, 1.0);
  return g;
}

geometry::GroundTruthSet random_truth(Rng& rng) {
  geometry::GroundTruthSet t;
  const int n = rng.integer(1, 3);
  for (int i = 0; i < n; ++i) {
    const double w = rng.uniform(6.0, 18.0);
    const double h = rng.uniform(6.0, 18.0);
    const double x = rng.uniform(0.0, kExtent - w);
    const double y = rng.uniform(0.0, kExtent - h);
    t.objects.push_back({{x, y, x + w, y + h}, rng.integer(0, kClasses - 1)});
  }
  return t;
}

std::vector<geometry::AnchorGrid> pyramid() {
  return {geometry::AnchorGrid::covering(0, kExtent, 8.0), geometry::AnchorGrid::covering(1, kExtent, 16.0)};
}

// Harmony distillation through the whole student path: logits -> p_c,
// offsets -> decode -> IoU -> p_r -> HS; teacher grids are constants.
ad::Var harmony_point(ad::Graph& g, Rng& rng, bool weighted, harmony::HsVariant variant, harmony::LossNorm norm,
                      signals::PcMode mode) {
  const auto truth = random_truth(rng);
  std::vector<harmony::HarmonyGrid> teacher, student;
  std::vector<Grid> psi;
  for (const auto& a : pyramid()) {
    const Shape cls{a.rows, a.cols, kClasses};
    const Shape reg{a.rows, a.cols, 4};
    ad::Graph tg;
    auto t_pc = signals::classification_probability(tg.constant(normal_grid(cls, 1.5, rng)), mode);
    auto t_pr = signals::regression_probability(tg.constant(normal_grid(reg, 0.7, rng)), a, truth);
    auto t_hs = harmony::harmony_score(t_pc, t_pr, variant, a.level);

    const std::string tag = std::to_string(a.level);
    auto logits = g.parameter("logits." + tag, normal_grid(cls, 1.5, rng));
    auto offsets = g.parameter("offsets." + tag, normal_grid(reg, 0.7, rng));
    auto pc = signals::classification_probability(logits, mode);
    auto pr = signals::regression_probability(offsets, a, truth);
    student.push_back(harmony::harmony_score(pc, pr, variant, a.level));
    teacher.push_back(harmony::constant_harmony(g, t_hs.hs.value(), t_hs.delta.value(), variant, a.level));
    psi.push_back(harmony::psi_mask(t_pr.value(), t_pc.value(), pc.value()));
  }
  return weighted ? harmony::hd_loss_weighted(teacher, student, psi, norm)
                  : harmony::hd_loss_uniform(teacher, student, norm);
}

struct FeaturePoint {
  std::vector<ad::Var> teacher, student;
  std::vector<distill::AdaptiveLayerVars> phi;
  std::vector<distill::LevelMasks> masks;
};

FeaturePoint feature_point(ad::Graph& g, Rng& rng) {
  constexpr int kStudent = 3;
  constexpr int kTeacher = 5;
  FeaturePoint p;
  for (const auto& a : pyramid()) {
    const std::string tag = std::to_string(a.level);
    p.teacher.push_back(g.constant(normal_grid({a.rows, a.cols, kTeacher}, 1.0, rng)));
    p.student.push_back(g.parameter("features." + tag, normal_grid({a.rows, a.cols, kStudent}, 1.0, rng)));
    p.phi.push_back({g.parameter("phi." + tag + ".w", normal_grid({kTeacher, kStudent, 1}, 0.5, rng)),
                     g.parameter("phi." + tag + ".b", normal_grid({1, 1, kTeacher}, 0.1, rng))});
    const Shape m{a.rows, a.cols, 1};
    p.masks.push_back({unit_grid(m, rng), unit_grid(m, rng), unit_grid(m, rng), unit_grid(m, rng)});
  }
  return p;
}

ad::Var detector_point(ad::Graph& g, Rng& rng) {
  toy::ScenarioSpec spec;
  spec.extent = kExtent;
  spec.cell = 8.0;
  spec.classes = kClasses;
  spec.min_size = 6.0;
  spec.max_size = 18.0;
  spec.max_objects = 3;
  spec.noise = 0.1;
  const auto scene = toy::generate_scene(spec, rng.integer(0, 1 << 30));
  toy::DetectorConfig cfg;
  cfg.classes = kClasses;
  cfg.width = 4;
  cfg.context_radius = 1;
  cfg.extent = kExtent;
  cfg.stride = 8.0;
  auto net = toy::DetectorNet::create(cfg, static_cast<std::uint64_t>(rng.integer(0, 1 << 30)));
  // Spread the biases away from their constant initial values.
  std::vector<std::string> names;
  for (const auto& entry : net.parameters().entries()) names.push_back(entry.first);
  for (const auto& name : names) {
    for (auto& x : net.parameters().get(name).values()) x += 0.3 * rng.normal();
  }
  auto levels = toy::forward(net, scene, g, true);
  return toy::detector_loss(levels, scene.truth);
}

}  // namespace

std::vector<GradientSuiteEntry> run_gradient_suite(std::uint64_t seed, int points, double step) {
  using Builder = std::function<ad::Var(ad::Graph&, Rng&)>;
  const std::vector<std::pair<std::string, Builder>> losses = {
      {"hd_loss_uniform",
       [](ad::Graph& g, Rng& r) {
         const auto v = static_cast<harmony::HsVariant>(r.integer(0, 2));
         const auto n = static_cast<harmony::LossNorm>(r.integer(0, 1));
         return harmony_point(g, r, false, v, n, signals::PcMode::SpatialSoftmax);
       }},
      {"hd_loss_weighted",
       [](ad::Graph& g, Rng& r) {
         const auto v = static_cast<harmony::HsVariant>(r.integer(0, 2));
         const auto n = static_cast<harmony::LossNorm>(r.integer(0, 1));
         const auto m = static_cast<signals::PcMode>(r.integer(0, 1));
         return harmony_point(g, r, true, v, n, m);
       }},
      {"fpn_mimic_loss",
       [](ad::Graph& g, Rng& r) {
         auto p = feature_point(g, r);
         return distill::fpn_mimic_loss(p.teacher, p.student, p.phi);
       }},
      {"tfd_fixed",
       [](ad::Graph& g, Rng& r) {
         auto p = feature_point(g, r);
         return distill::tfd_fixed(p.teacher, p.student, p.phi, p.masks, r.uniform(0.1, 1.0), r.uniform(0.1, 1.0));
       }},
      {"tfd_dynamic",
       [](ad::Graph& g, Rng& r) {
         auto p = feature_point(g, r);
         const distill::TwgVars twg{g.parameter("twg.w1", normal_grid({16, 4, 1}, 0.5, r)),
                                    g.parameter("twg.b1", normal_grid({1, 1, 16}, 0.5, r)),
                                    g.parameter("twg.w2", normal_grid({2, 16, 1}, 0.5, r)),
                                    g.parameter("twg.b2", normal_grid({1, 1, 2}, 0.5, r))};
         return distill::tfd_dynamic(p.teacher, p.student, p.phi, p.masks, twg);
       }},
      {"detector_loss", [](ad::Graph& g, Rng& r) { return detector_point(g, r); }},
  };

  std::vector<GradientSuiteEntry> out;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    GradientSuiteEntry e;
    e.loss = losses[k].first;
    Rng rng(mix_seed(seed, k));
    for (int i = 0; i < points; ++i) {
      ad::Graph g;
      ad::Var loss = losses[k].second(g, rng);
      const auto report = ad::finite_difference_check(g, loss, step);
      ++e.points;
      e.coordinates += report.coordinates;
      e.tie_flips += report.tie_flips;
      if (report.max_relative_error >= e.max_relative_error) {
        e.max_relative_error = report.max_relative_error;
        e.worst = report;
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace tbd
