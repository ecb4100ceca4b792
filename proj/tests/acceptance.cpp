// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "tbd/analysis.hpp"
#include "tbd/feature_distill.hpp"
#include "tbd/geometry.hpp"
#include "tbd/gradient_suite.hpp"
#include "tbd/harmony.hpp"
#include "tbd/rng.hpp"
#include "tbd/task_signals.hpp"
#include "tbd/trainer.hpp"

using namespace tbd;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr int kGradPoints = 20;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kOracleTolerance = 0.01;
constexpr int kOracleResolution = 256;
constexpr int kOraclePairs = 1000;
constexpr double kStructureTolerance = 1e-12;
constexpr int kStructureTrials = 100;
constexpr int kTrainingSeeds = 5;
constexpr int kHeldOutScenes = 200;
constexpr int kTrainScenes = 128;
constexpr int kTeacherSteps = 1000;
constexpr int kStudentSteps = 800;
constexpr double kGapDrop = 0.30;
constexpr double kHdFinalFraction = 0.30;
constexpr double kToyScoreThreshold = 0.8;
constexpr double kToyHighBand = 0.8;
constexpr double kReproBudgetSeconds = 600.0;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

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

geometry::BBox random_box(Rng& rng, double extent, double min_side, double max_side) {
  const double w = rng.uniform(min_side, max_side);
  const double h = rng.uniform(min_side, max_side);
  const double x = rng.uniform(0.0, extent - w);
  const double y = rng.uniform(0.0, extent - h);
  return {x, y, x + w, y + h};
}

geometry::GroundTruthSet random_truth(Rng& rng, int max_objects, double extent) {
  geometry::GroundTruthSet t;
  const int n = rng.integer(1, max_objects);
  for (int i = 0; i < n; ++i) t.objects.push_back({random_box(rng, extent, 6.0, 24.0), rng.integer(0, 2)});
  return t;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string num(double v, const char* f = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome criterion_gradients() {
  const auto start = Clock::now();
  const auto entries = run_gradient_suite(20240601, kGradPoints);
  const double elapsed = seconds_since(start);
  Outcome o;
  double worst = 0.0;
  std::string worst_loss;
  for (const auto& e : entries) {
    if (e.points != kGradPoints || !(e.max_relative_error < kGradTolerance)) o.pass = false;
    if (e.max_relative_error >= worst) {
      worst = e.max_relative_error;
      worst_loss = e.loss;
    }
  }
  o.pass = o.pass && entries.size() == 6 && elapsed < kGradBudgetSeconds;
  o.detail = std::to_string(entries.size()) + " losses x " + std::to_string(kGradPoints) +
             " points, worst relative error " + num(worst) + " (" + worst_loss + ") < " + num(kGradTolerance) + ", " +
             num(elapsed, "%.2f") + " s < " + num(kGradBudgetSeconds, "%.0f") + " s";
  return o;
}

Outcome criterion_identities() {
  Rng rng(7);
  double hs_dev = 0.0;
  bool hs_max = true;
  for (auto v : {harmony::HsVariant::Tanh, harmony::HsVariant::Exp, harmony::HsVariant::Log}) {
    const double top = harmony::harmony_value(0.0, v);
    hs_dev = std::max(hs_dev, std::fabs(top - 1.0));
    for (int i = 1; i <= 1000; ++i) hs_max = hs_max && harmony::harmony_value(i / 1000.0, v) < top;
  }

  double hd_dev = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ad::Graph g;
    std::vector<harmony::HarmonyGrid> t, s;
    std::vector<Grid> psi;
    const auto variant = static_cast<harmony::HsVariant>(trial % 3);
    for (int l = 0; l < 2; ++l) {
      const int n = 8 >> l;
      const Shape sh{n, n, 1};
      auto pc_t = unit_grid(sh, rng), pr_t = unit_grid(sh, rng);
      ad::Graph tg;
      auto ht = harmony::harmony_score(tg.constant(pc_t), tg.constant(pr_t), variant, l);
      t.push_back(harmony::constant_harmony(g, ht.hs.value(), ht.delta.value(), variant, l));
      s.push_back(harmony::harmony_score(g.parameter("pc" + std::to_string(l), unit_grid(sh, rng)),
                                         g.parameter("pr" + std::to_string(l), unit_grid(sh, rng)), variant, l));
      psi.push_back(Grid(sh, rng.uniform(0.1, 3.0)));
    }
    for (auto norm : {harmony::LossNorm::L1, harmony::LossNorm::L2}) {
      const double w = harmony::hd_loss_weighted(t, s, psi, norm).item();
      const double u = harmony::hd_loss_uniform(t, s, norm).item();
      hd_dev = std::max(hd_dev, std::fabs(w - u));
    }
  }

  double tfd_dev = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ad::Graph g;
    std::vector<ad::Var> ft, fs;
    std::vector<distill::AdaptiveLayerVars> phi;
    std::vector<distill::LevelMasks> masks;
    for (int l = 0; l < 2; ++l) {
      const int n = 8 >> l;
      const std::string tag = std::to_string(l);
      ft.push_back(g.constant(normal_grid({n, n, 6}, 1.0, rng)));
      fs.push_back(g.parameter("fs" + tag, normal_grid({n, n, 3}, 1.0, rng)));
      phi.push_back({g.parameter("phi.w" + tag, normal_grid({6, 3, 1}, 0.5, rng)),
                     g.parameter("phi.b" + tag, normal_grid({1, 1, 6}, 0.1, rng))});
      const Shape m{n, n, 1};
      masks.push_back({unit_grid(m, rng), unit_grid(m, rng), unit_grid(m, rng), unit_grid(m, rng)});
    }
    // Zero output layer: the generator's softmax is exactly (0.5, 0.5).
    const distill::TwgVars twg{g.parameter("w1", normal_grid({16, 4, 1}, 0.5, rng)),
                               g.parameter("b1", normal_grid({1, 1, 16}, 0.5, rng)),
                               g.parameter("w2", Grid(2, 16, 1, 0.0)), g.parameter("b2", Grid(1, 1, 2, 0.0))};
    const double dyn = distill::tfd_dynamic(ft, fs, phi, masks, twg).item();
    const double fixed = distill::tfd_fixed(ft, fs, phi, masks, 0.5, 0.5).item();
    tfd_dev = std::max(tfd_dev, std::fabs(dyn - fixed));
  }

  toy::ScenarioSpec spec;
  spec.extent = 32.0;
  spec.cell = 8.0;
  spec.min_size = 6.0;
  spec.max_size = 16.0;
  const auto scenes = toy::generate_dataset(spec, 3, 8);
  toy::DetectorConfig sc;
  sc.width = 4;
  sc.context_radius = 1;
  sc.extent = 32.0;
  sc.stride = 8.0;
  toy::DetectorConfig tc = sc;
  tc.width = 8;
  const auto student = toy::DetectorNet::create(sc, 2);
  const auto teacher = toy::DetectorNet::create(tc, 1);
  toy::TrainingConfig cfg;
  cfg.steps = 20;
  cfg.batch = 2;
  cfg.seed = 5;
  cfg.distill.alpha = 0.0;
  cfg.distill.beta = 0.0;
  const auto vanilla = toy::train(student, scenes, cfg);
  const auto distilled = toy::train(student, scenes, cfg, &teacher);
  bool bitwise = vanilla.net.parameters().size() == distilled.net.parameters().size();
  for (std::size_t i = 0; bitwise && i < vanilla.net.parameters().size(); ++i) {
    const Grid& a = vanilla.net.parameters().entries()[i].second;
    const Grid& b = distilled.net.parameters().entries()[i].second;
    bitwise = a.size() == b.size() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
  }
  for (std::size_t i = 0; bitwise && i < vanilla.trace.size(); ++i) {
    bitwise = std::memcmp(&vanilla.trace[i].detector, &distilled.trace[i].total, sizeof(double)) == 0;
  }

  Outcome o;
  o.pass = hs_dev <= kIdentityTolerance && hs_max && hd_dev <= kIdentityTolerance && tfd_dev <= kIdentityTolerance &&
           bitwise;
  o.detail = "|HS(0) - 1| " + num(hs_dev) + (hs_max ? " (strict maximum)" : " (NOT a maximum)") +
             ", |HD_w(uniform psi) - HD_u| " + num(hd_dev) + ", |TFD_dyn(0.5,0.5) - TFD_fixed| " + num(tfd_dev) +
             " <= " + num(kIdentityTolerance) + "; alpha=beta=0 vs vanilla " + (bitwise ? "bitwise equal" : "DIFFERS");
  return o;
}

Outcome criterion_oracles() {
  Rng rng(11);
  double iou_dev = 0.0;
  for (int i = 0; i < kOraclePairs; ++i) {
    const auto a = random_box(rng, 64.0, 1.0, 40.0);
    // Half the pairs are built to overlap.
    geometry::BBox b = random_box(rng, 64.0, 1.0, 40.0);
    if (i % 2 == 0) {
      const double dx = rng.uniform(-0.5, 0.5) * a.width(), dy = rng.uniform(-0.5, 0.5) * a.height();
      b = {a.x1 + dx, a.y1 + dy, a.x1 + dx + rng.uniform(0.5, 1.5) * a.width(),
           a.y1 + dy + rng.uniform(0.5, 1.5) * a.height()};
    }
    iou_dev = std::max(iou_dev, std::fabs(geometry::iou(a, b) - geometry::raster_iou(a, b, kOracleResolution)));
  }
  double pr_dev = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto truth = random_truth(rng, 4, 64.0);
    for (double stride : {4.0, 8.0}) {
      const auto anchors = geometry::AnchorGrid::covering(0, 64.0, stride);
      ad::Graph g;
      const Grid offsets = normal_grid({anchors.rows, anchors.cols, 4}, 0.8, rng);
      const Grid analytic = signals::regression_probability(g.constant(offsets), anchors, truth).value();
      const Grid oracle = signals::regression_probability_raster(offsets, anchors, truth, kOracleResolution);
      for (std::size_t i = 0; i < analytic.size(); ++i) pr_dev = std::max(pr_dev, std::fabs(analytic[i] - oracle[i]));
    }
  }
  Outcome o;
  o.pass = iou_dev <= kOracleTolerance && pr_dev <= kOracleTolerance;
  o.detail = "max |iou - raster_iou| " + num(iou_dev) + " over " + std::to_string(kOraclePairs) +
             " pairs, max |p_r - raster p_r| " + num(pr_dev) + " (resolution " + std::to_string(kOracleResolution) +
             ") <= " + num(kOracleTolerance);
  return o;
}

Outcome criterion_structure() {
  Rng rng(13);
  double twg_dev = 0.0;
  for (int trial = 0; trial < kStructureTrials; ++trial) {
    ad::Graph g;
    const double scale = rng.uniform(0.1, 3.0);
    const distill::TwgVars twg{g.parameter("w1", normal_grid({16, 4, 1}, scale, rng)),
                               g.parameter("b1", normal_grid({1, 1, 16}, scale, rng)),
                               g.parameter("w2", normal_grid({2, 16, 1}, scale, rng)),
                               g.parameter("b2", normal_grid({1, 1, 2}, scale, rng))};
    for (int n : {16, 8}) {
      const Shape m{n, n, 1};
      const auto w = distill::twg_weights(twg, {unit_grid(m, rng), unit_grid(m, rng), unit_grid(m, rng), unit_grid(m, rng)});
      twg_dev = std::max(twg_dev, std::fabs(w.value()[0] + w.value()[1] - 1.0));
    }
  }
  double pc_dev = 0.0;
  for (int trial = 0; trial < kStructureTrials; ++trial) {
    ad::Graph g;
    for (int n : {16, 8}) {
      const auto pc = signals::classification_probability(g.constant(normal_grid({n, n, 3}, 3.0, rng)),
                                                          signals::PcMode::SpatialSoftmax);
      pc_dev = std::max(pc_dev, std::fabs(pc.value().sum() - 1.0));
    }
  }
  bool nms_ok = true;
  for (int trial = 0; trial < kStructureTrials; ++trial) {
    std::vector<geometry::Detection> c;
    const int n = rng.integer(0, 40);
    for (int i = 0; i < n; ++i) c.push_back({random_box(rng, 64.0, 4.0, 20.0), rng.uniform(), rng.integer(0, 2)});
    const double thr = rng.uniform(0.2, 0.8);
    const auto once = geometry::nms_select(c, thr);
    const auto twice = geometry::nms_select(once, thr);
    nms_ok = nms_ok && once.size() == twice.size();
    for (std::size_t i = 0; nms_ok && i < once.size(); ++i) {
      nms_ok = once[i].box == twice[i].box && once[i].score == twice[i].score && once[i].label == twice[i].label;
      for (std::size_t j = i + 1; j < once.size(); ++j) {
        if (once[i].label == once[j].label && geometry::iou(once[i].box, once[j].box) > thr) nms_ok = false;
      }
    }
  }
  bool partition = true;
  for (int trial = 0; trial < kStructureTrials; ++trial) {
    const auto truth = rng.integer(0, 3) == 0 ? geometry::GroundTruthSet{} : random_truth(rng, 5, 64.0);
    std::vector<geometry::Detection> p;
    const int n = rng.integer(0, 15);
    for (int i = 0; i < n; ++i) p.push_back({random_box(rng, 64.0, 4.0, 24.0), rng.uniform(), rng.integer(0, 2)});
    const double floor = rng.uniform(0.0, 0.6);
    const auto e = analysis::error_analysis(p, truth, floor);
    std::size_t above = 0;
    for (const auto& d : p) above += d.score >= floor ? 1 : 0;
    partition = partition && e.correct + e.loc + e.oth + e.bg == above && e.fn == truth.size() - e.correct;
  }
  Outcome o;
  o.pass = twg_dev <= kStructureTolerance && pc_dev <= kStructureTolerance && nms_ok && partition;
  o.detail = "TWG |T0+T1-1| " + num(twg_dev) + ", softmax |sum p_c - 1| " + num(pc_dev) + " <= " +
             num(kStructureTolerance) + " over " + std::to_string(kStructureTrials) + " draws; NMS idempotent & " +
             "overlap-free " + (nms_ok ? "yes" : "NO") + "; error buckets partition " + (partition ? "yes" : "NO");
  return o;
}

struct ReproContext {
  std::vector<toy::SyntheticScene> train;
  std::vector<toy::SyntheticScene> eval;
  toy::DetectorNet teacher;
  toy::TrainingConfig training;
};

ReproContext make_repro_context() {
  toy::ScenarioSpec spec;
  ReproContext ctx{toy::generate_dataset(spec, 11, kTrainScenes), toy::generate_dataset(spec, 999, kHeldOutScenes),
                   toy::DetectorNet::create(toy::DetectorConfig{}, 5), {}};
  toy::DetectorConfig tc;
  tc.width = 64;
  toy::TrainingConfig teacher_cfg;
  teacher_cfg.steps = kTeacherSteps;
  ctx.teacher = toy::train(toy::DetectorNet::create(tc, 5), ctx.train, teacher_cfg).net;
  ctx.training.steps = kStudentSteps;
  return ctx;
}

Outcome criterion_reproduction(const ReproContext& ctx, Clock::time_point start) {
  std::vector<double> harm_v, harm_d, gap_v, gap_d, hd_ratio;
  for (int s = 0; s < kTrainingSeeds; ++s) {
    toy::DetectorConfig sc;
    sc.width = 16;
    const auto init = toy::DetectorNet::create(sc, 100 + static_cast<std::uint64_t>(s));
    toy::TrainingConfig cfg = ctx.training;
    cfg.seed = 200 + static_cast<std::uint64_t>(s);
    const auto vanilla = toy::train(init, ctx.train, cfg);
    const auto distilled = toy::train(init, ctx.train, cfg, &ctx.teacher);
    for (const auto* net : {&vanilla.net, &distilled.net}) {
      const auto evals = analysis::evaluate(*net, ctx.eval, cfg.distill);
      const auto m = analysis::summarize("m", evals, 3, kToyScoreThreshold, kToyHighBand);
      const double gap = analysis::mean_harmony_gap(ctx.teacher, *net, ctx.eval, cfg.distill);
      (net == &vanilla.net ? harm_v : harm_d).push_back(m.histogram.harmonious());
      (net == &vanilla.net ? gap_v : gap_d).push_back(gap);
    }
    hd_ratio.push_back(distilled.trace.back().hd / distilled.trace.front().hd);
    std::printf("  seed %d: harmonious vanilla %.4f distilled %.4f | gap vanilla %.5f distilled %.5f | HD final/initial %.3f\n",
                s, harm_v.back(), harm_d.back(), gap_v.back(), gap_d.back(), hd_ratio.back());
    std::fflush(stdout);
  }
  const double elapsed = seconds_since(start);
  const double hv = median(harm_v), hd = median(harm_d);
  const double drop = 1.0 - median(gap_d) / median(gap_v);
  const double ratio = median(hd_ratio);
  Outcome o;
  o.pass = hd > hv && drop >= kGapDrop && ratio < kHdFinalFraction && elapsed < kReproBudgetSeconds;
  o.detail = "median harmonious fraction (score > " + num(kToyScoreThreshold) + ", IoU >= " + num(kToyHighBand) +
             ") distilled " + num(hd, "%.4f") + " vs vanilla " + num(hv, "%.4f") + "; harmony gap drop " +
             num(100.0 * drop, "%.1f") + "% >= " + num(100.0 * kGapDrop, "%.0f") + "%; HD final/initial " +
             num(ratio, "%.3f") + " < " + num(kHdFinalFraction) + "; " + num(elapsed, "%.1f") + " s < " +
             num(kReproBudgetSeconds, "%.0f") + " s";
  return o;
}

Outcome criterion_ablation(const ReproContext& ctx, const std::filesystem::path& out_dir) {
  toy::DetectorConfig sc;
  sc.width = 16;
  const auto student = toy::DetectorNet::create(sc, 100);
  analysis::AblationSetup setup;
  setup.teacher = &ctx.teacher;
  setup.student = &student;
  setup.train = std::span<const toy::SyntheticScene>(ctx.train).first(32);
  setup.eval = std::span<const toy::SyntheticScene>(ctx.eval).first(50);
  setup.training.steps = 150;
  setup.training.seed = 3;
  std::filesystem::create_directories(out_dir);
  Outcome o;
  std::string sizes;
  for (const auto& [name, rows] : {std::pair{std::string("hd"), analysis::hd_ablation_grid({})},
                                   std::pair{std::string("mask"), analysis::mask_ablation_grid({})}}) {
    std::string first, second;
    try {
      first = analysis::ablation_csv(analysis::run_ablation(rows, setup));
      second = analysis::ablation_csv(analysis::run_ablation(rows, setup));
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail += name + " grid threw: " + e.what() + "; ";
      continue;
    }
    std::ofstream(out_dir / ("ablation_" + name + ".csv"), std::ios::binary) << first;
    const auto lines = static_cast<std::size_t>(std::count(first.begin(), first.end(), '\n'));
    const bool complete = lines == rows.size() + 1;
    o.pass = o.pass && complete && first == second;
    sizes += name + " grid " + std::to_string(rows.size()) + " rows " + (complete ? "complete" : "INCOMPLETE") +
             (first == second ? ", deterministic" : ", NOT deterministic") + "; ";
    std::printf("%s", first.c_str());
  }
  o.detail += sizes + "tables in " + out_dir.string();
  return o;
}

Outcome criterion_audit() {
  const geometry::BBox gt{0.0, 0.0, 10.0, 10.0};
  const geometry::Detection kept{{10.0 / 3.0, 0.0, 10.0 / 3.0 + 10.0, 10.0}, 0.9, 0};
  const geometry::Detection better{{10.0 / 19.0, 0.0, 10.0 / 19.0 + 10.0, 10.0}, 0.8, 0};
  geometry::GroundTruthSet truth;
  truth.objects.push_back({gt, 0});
  const std::vector<geometry::Detection> c{kept, better};
  const auto audit = analysis::nms_audit(c, truth, 0.5);
  Outcome o;
  const bool scenario = std::fabs(geometry::iou(kept.box, gt) - 0.5) < 1e-12 &&
                        std::fabs(geometry::iou(better.box, gt) - 0.9) < 1e-12;
  o.pass = scenario && audit.inharmonious() == 1 && audit.events.size() == 1;
  o.detail = "kept (score 0.9, IoU " + num(geometry::iou(kept.box, gt)) + ") vs suppressed (score 0.8, IoU " +
             num(geometry::iou(better.box, gt)) + "): " + std::to_string(audit.inharmonious()) +
             " inharmonious of " + std::to_string(audit.events.size()) + " suppression events";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out_dir = argc > 1 ? argv[1] : "acceptance_out";
  report(1, "gradient suite", criterion_gradients());
  report(2, "algebraic identities", criterion_identities());
  report(3, "oracle equivalence", criterion_oracles());
  report(4, "structural invariants", criterion_structure());
  const auto start = Clock::now();
  const auto ctx = make_repro_context();
  report(5, "directional reproduction", criterion_reproduction(ctx, start));
  report(6, "ablation harness", criterion_ablation(ctx, out_dir));
  report(7, "NMS audit scenario", criterion_audit());
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
