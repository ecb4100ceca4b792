#include "tbd/harmony.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tbd::harmony {

namespace {

constexpr double kRangeSlack = 1e-12;

void check_unit_range(const Grid& g, const char* what) {
  for (double v : g.values()) {
    if (!(v >= -kRangeSlack && v <= 1.0 + kRangeSlack)) {
      throw std::invalid_argument(std::string("harmony_score: ") + what + " value " +
                                  std::to_string(v) + " outside [0, 1]");
    }
  }
}

void check_pair(std::span<const HarmonyGrid> teacher, std::span<const HarmonyGrid> student) {
  if (teacher.size() != student.size()) throw std::invalid_argument("HD loss: level count mismatch");
  if (teacher.empty()) throw std::invalid_argument("HD loss: no levels");
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    const auto& t = teacher[l];
    const auto& s = student[l];
    if (t.variant != s.variant) throw std::invalid_argument("HD loss: HS variant mismatch");
    if (!(t.hs.shape() == s.hs.shape())) {
      throw std::invalid_argument("HD loss: shape mismatch at level " + std::to_string(l));
    }
    if (t.hs.graph != s.hs.graph) throw std::invalid_argument("HD loss: grids from different graphs");
    if (!t.hs.graph->is_constant(t.hs)) {
      throw std::invalid_argument("HD loss: teacher harmony grid must be constant");
    }
  }
}

ad::Var gap(const HarmonyGrid& t, const HarmonyGrid& s, LossNorm norm) {
  ad::Var d = t.hs - s.hs;
  return norm == LossNorm::L1 ? ad::abs(d) : ad::square(d);
}

}  // namespace

HsVariant parse_variant(std::string_view name) {
  if (name == "tanh") return HsVariant::Tanh;
  if (name == "exp") return HsVariant::Exp;
  if (name == "log") return HsVariant::Log;
  throw std::invalid_argument("unknown HS variant '" + std::string(name) + "'");
}

LossNorm parse_norm(std::string_view name) {
  if (name == "l1" || name == "L1") return LossNorm::L1;
  if (name == "l2" || name == "L2") return LossNorm::L2;
  throw std::invalid_argument("unknown loss norm '" + std::string(name) + "'");
}

const char* to_string(HsVariant v) {
  switch (v) {
    case HsVariant::Tanh: return "tanh";
    case HsVariant::Exp: return "exp";
    case HsVariant::Log: return "log";
  }
  return "?";
}

const char* to_string(LossNorm n) { return n == LossNorm::L1 ? "l1" : "l2"; }

double harmony_value(double delta, HsVariant variant) {
  switch (variant) {
    case HsVariant::Tanh: return 1.0 - std::tanh(delta);
    case HsVariant::Exp: return std::exp(-delta);
    case HsVariant::Log: return 1.0 / std::log(std::numbers::e + delta);
  }
  return 0.0;
}

double harmony_floor(HsVariant variant) { return harmony_value(1.0, variant); }

HarmonyGrid harmony_score(ad::Var pc, ad::Var pr, HsVariant variant, int level) {
  if (!(pc.shape() == pr.shape())) throw std::invalid_argument("harmony_score: p_c/p_r shape mismatch");
  check_unit_range(pc.value(), "p_c");
  check_unit_range(pr.value(), "p_r");
  ad::Var delta = ad::abs(pr - pc);
  ad::Var hs;
  switch (variant) {
    case HsVariant::Tanh: hs = 1.0 - ad::tanh(delta); break;
    case HsVariant::Exp: hs = ad::exp(-delta); break;
    case HsVariant::Log: hs = 1.0 / ad::log(delta + std::numbers::e); break;
  }
  return {level, variant, hs, delta};
}

HarmonyGrid constant_harmony(ad::Graph& graph, const Grid& hs, const Grid& delta,
                             HsVariant variant, int level) {
  return {level, variant, graph.constant(hs), graph.constant(delta)};
}

ad::Var hd_loss_uniform(std::span<const HarmonyGrid> teacher, std::span<const HarmonyGrid> student,
                        LossNorm norm) {
  check_pair(teacher, student);
  ad::Var total = ad::mean(gap(teacher[0], student[0], norm));
  for (std::size_t l = 1; l < teacher.size(); ++l) {
    total = total + ad::mean(gap(teacher[l], student[l], norm));
  }
  return total;
}

Grid psi_mask(const Grid& pr_t, const Grid& pc_t, const Grid& pc_s) {
  if (!(pr_t.shape() == pc_t.shape()) || !(pc_t.shape() == pc_s.shape())) {
    throw std::invalid_argument("psi_mask: shape mismatch");
  }
  Grid psi(pr_t.shape());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    psi[i] = pr_t[i] * std::sqrt(1.0 + std::fabs(pc_t[i] - pc_s[i]));
  }
  return psi;
}

ad::Var hd_loss_weighted(std::span<const HarmonyGrid> teacher, std::span<const HarmonyGrid> student,
                         std::span<const Grid> psi, LossNorm norm) {
  check_pair(teacher, student);
  if (psi.size() != teacher.size()) throw std::invalid_argument("HD loss: Psi level count mismatch");
  ad::Graph& g = *teacher[0].hs.graph;
  ad::Var total = g.constant(0.0);
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    if (!(psi[l].shape() == teacher[l].hs.shape())) {
      throw std::invalid_argument("HD loss: Psi shape mismatch at level " + std::to_string(l));
    }
    const double mass = psi[l].sum();
    if (mass == 0.0) continue;
    ad::Var weighted = ad::sum(g.constant(psi[l]) * gap(teacher[l], student[l], norm));
    total = total + weighted / mass;
  }
  return total;
}

}  // namespace tbd::harmony
