#include "tbd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tbd/rng.hpp"

namespace tbd::toy {

namespace {

std::string phi_key(int level, const char* leaf) { return "phi." + std::to_string(level) + "." + leaf; }

Grid uniform_grid(Shape s, double bound, Rng& rng) {
  Grid g(s);
  for (auto& v : g.values()) v = rng.uniform(-bound, bound);
  return g;
}

}  // namespace

void DistillConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  if (!(omega_cls >= 0.0)) throw std::invalid_argument("omega_cls must be non-negative");
  if (!(omega_reg >= 0.0)) throw std::invalid_argument("omega_reg must be non-negative");
  if (twg_hidden < 1) throw std::invalid_argument("twg_hidden must be positive");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw std::invalid_argument("nms_iou must lie in (0, 1]");
  if (!(score_floor >= 0.0 && score_floor < 1.0)) throw std::invalid_argument("score_floor must lie in [0, 1)");
}

void TrainingConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  distill.validate();
}

std::vector<TeacherLevel> teacher_levels(const DetectorNet& teacher, const SyntheticScene& scene,
                                         const DistillConfig& cfg) {
  ad::Graph g;
  auto levels = forward(teacher, scene, g, false);
  std::vector<TeacherLevel> out;
  for (const auto& l : levels) {
    auto pc = signals::classification_probability(l.logits, cfg.pc_mode);
    auto pr = signals::regression_probability(l.offsets, l.anchors, scene.truth);
    auto hs = harmony::harmony_score(pc, pr, cfg.hs_variant, l.level);
    out.push_back({l.features.value(), pc.value(), pr.value(), hs.hs.value(), hs.delta.value()});
  }
  return out;
}

ParameterSet create_distill_params(const DetectorConfig& student, const DetectorConfig& teacher,
                                   const DistillConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParameterSet p;
  for (int l = 0; l < kLevels; ++l) {
    Grid w(teacher.width, student.width, 1, 0.0);
    if (teacher.width == student.width) {
      for (int i = 0; i < teacher.width; ++i) w(i, i, 0) = 1.0;
    } else {
      w = uniform_grid(w.shape(), std::sqrt(3.0 / student.width), rng);
    }
    p.add(phi_key(l, "w"), std::move(w));
    p.add(phi_key(l, "b"), Grid(1, 1, teacher.width, 0.0));
  }
  p.add("twg.w1", uniform_grid({cfg.twg_hidden, 4, 1}, 0.5, rng));
  p.add("twg.b1", Grid(1, 1, cfg.twg_hidden, 0.0));
  p.add("twg.w2", Grid(2, cfg.twg_hidden, 1, 0.0));
  p.add("twg.b2", Grid(1, 1, 2, 0.0));
  return p;
}

DistillTerms distill_terms(std::span<const LevelOutput> student, std::span<const TeacherLevel> teacher,
                           const geometry::GroundTruthSet& truth, const DistillConfig& cfg,
                           const std::map<std::string, ad::Var>& dp) {
  if (student.size() != teacher.size()) throw std::invalid_argument("distill_terms: level count mismatch");
  ad::Graph& g = *student.front().logits.graph;
  std::vector<harmony::HarmonyGrid> hs_t, hs_s;
  std::vector<Grid> psi;
  std::vector<ad::Var> f_t, f_s;
  std::vector<distill::AdaptiveLayerVars> phi;
  std::vector<distill::LevelMasks> masks;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const LevelOutput& s = student[i];
    const TeacherLevel& t = teacher[i];
    auto pc = signals::classification_probability(s.logits, cfg.pc_mode);
    auto pr = signals::regression_probability(s.offsets, s.anchors, truth);
    hs_s.push_back(harmony::harmony_score(pc, pr, cfg.hs_variant, s.level));
    hs_t.push_back(harmony::constant_harmony(g, t.hs, t.delta, cfg.hs_variant, s.level));
    psi.push_back(harmony::psi_mask(t.pr, t.pc, pc.value()));

    f_t.push_back(g.constant(t.features));
    f_s.push_back(s.features);
    phi.push_back({dp.at(phi_key(s.level, "w")), dp.at(phi_key(s.level, "b"))});
    if (cfg.whole_feature) {
      const Shape ms{t.pc.rows(), t.pc.cols(), 1};
      masks.push_back({Grid(ms, 1.0), Grid(ms, 1.0), Grid(ms, 1.0), Grid(ms, 1.0)});
    } else {
      masks.push_back({t.pc, t.pr, pc.value(), pr.value()});
    }
  }

  DistillTerms out;
  out.hd = cfg.hd_weighted ? harmony::hd_loss_weighted(hs_t, hs_s, psi, cfg.hd_norm)
                           : harmony::hd_loss_uniform(hs_t, hs_s, cfg.hd_norm);
  if (cfg.whole_feature) {
    out.tfd = distill::tfd_fixed(f_t, f_s, phi, masks, 1.0, 0.0);
  } else if (cfg.twg) {
    const distill::TwgVars twg{dp.at("twg.w1"), dp.at("twg.b1"), dp.at("twg.w2"), dp.at("twg.b2")};
    out.tfd = distill::tfd_dynamic(f_t, f_s, phi, masks, twg, &out.task_weights);
  } else {
    out.tfd = distill::tfd_fixed(f_t, f_s, phi, masks, cfg.omega_cls, cfg.omega_reg);
  }
  return out;
}

TrainResult train(const DetectorNet& net, const std::vector<SyntheticScene>& scenes, const TrainingConfig& config,
                  const DetectorNet* teacher) {
  config.validate();
  if (scenes.empty()) throw std::invalid_argument("train: no training scenes");
  const DistillConfig& dc = config.distill;

  TrainResult result{net, {}, {}};
  if (teacher != nullptr) {
    if (teacher->config().classes != net.config().classes || teacher->config().extent != net.config().extent ||
        teacher->config().stride != net.config().stride) {
      throw std::invalid_argument("train: teacher and student disagree on classes or geometry");
    }
    result.distill_params =
        create_distill_params(net.config(), teacher->config(), dc, mix_seed(config.seed, 0x0d15ULL));
  }

  std::vector<std::vector<TeacherLevel>> cache;
  if (teacher != nullptr) {
    cache.reserve(scenes.size());
    for (const auto& s : scenes) cache.push_back(teacher_levels(*teacher, s, dc));
  }

  Rng order_rng(mix_seed(config.seed, 0x0bd3ULL));
  std::vector<std::size_t> order(scenes.size());
  std::size_t cursor = order.size();

  const double inv_batch = 1.0 / config.batch;
  for (int step = 0; step < config.steps; ++step) {
    TraceStep rec;
    rec.step = step;
    std::map<std::string, Grid> grads;
    std::vector<std::array<double, 2>> weights;

    for (int b = 0; b < config.batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.integer(0, static_cast<int>(i) - 1))]);
        }
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const SyntheticScene& scene = scenes[idx];

      try {
        ad::Graph g;
        auto levels = forward(result.net, scene, g, true, "student.");
        ad::Var det = detector_loss(levels, scene.truth);
        ad::Var loss = det;
        if (teacher != nullptr) {
          auto dp = result.distill_params.bind(g, "distill.", true);
          DistillTerms terms = distill_terms(levels, cache[idx], scene.truth, dc, dp);
          loss = distill::total_loss(det, terms.hd, terms.tfd, dc.alpha, dc.beta);
          rec.hd += inv_batch * terms.hd.item();
          rec.tfd += inv_batch * terms.tfd.item();
          if (weights.empty()) weights.assign(levels.size(), {0.0, 0.0});
          for (std::size_t l = 0; l < levels.size(); ++l) {
            const double t0 = terms.task_weights.empty() ? (dc.whole_feature ? 1.0 : dc.omega_cls)
                                                         : terms.task_weights[l].value()[0];
            const double t1 = terms.task_weights.empty() ? (dc.whole_feature ? 0.0 : dc.omega_reg)
                                                         : terms.task_weights[l].value()[1];
            weights[l][0] += inv_batch * t0;
            weights[l][1] += inv_batch * t1;
          }
        }
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw TrainingDiverged(step, "training diverged: non-finite loss at step " + std::to_string(step));
        }
        rec.detector += inv_batch * det.item();
        rec.total += inv_batch * value;

        for (auto& [name, grad] : g.backpropagate(loss)) {
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, std::move(grad));
          } else {
            auto dst = it->second.values();
            auto src = grad.values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      } catch (const ad::NumericError& e) {
        throw TrainingDiverged(step, "training diverged at step " + std::to_string(step) + ": " + e.what());
      }
    }
    const double rate = config.learning_rate * inv_batch;
    result.net.parameters().descend(grads, "student.", rate);
    if (teacher != nullptr) result.distill_params.descend(grads, "distill.", rate);
    rec.task_weights = std::move(weights);
    result.trace.push_back(std::move(rec));
  }
  return result;
}

}  // namespace tbd::toy
