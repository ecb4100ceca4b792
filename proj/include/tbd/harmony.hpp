#pragma once

#include <span>
#include <string_view>

#include "tbd/autodiff.hpp"

namespace tbd::harmony {

enum class HsVariant { Tanh, Exp, Log };
enum class LossNorm { L1, L2 };

HsVariant parse_variant(std::string_view name);
LossNorm parse_norm(std::string_view name);
const char* to_string(HsVariant v);
const char* to_string(LossNorm n);

/// Harmony score of one level together with the task gap it was built from.
struct HarmonyGrid {
  int level = 0;
  HsVariant variant = HsVariant::Tanh;
  ad::Var hs;
  ad::Var delta;
};

/// Plain evaluation: tanh: 1 - tanh(d); exp: e^-d; log: 1 / ln(e + d).
double harmony_value(double delta, HsVariant variant);
/// Value of the variant at delta = 1, its minimum over [0, 1].
double harmony_floor(HsVariant variant);

/// delta = |p_r - p_c|, HS = variant(delta). Rejects inputs outside [0, 1].
HarmonyGrid harmony_score(ad::Var pc, ad::Var pr, HsVariant variant, int level = 0);

/// Teacher-side harmony grid inserted into `graph` as constants.
HarmonyGrid constant_harmony(ad::Graph& graph, const Grid& hs, const Grid& delta,
                             HsVariant variant, int level = 0);

/// Sum over levels of the per-cell mean |HS^t - HS^s| (L1) or squared gap (L2).
/// Teacher grids must be constants.
ad::Var hd_loss_uniform(std::span<const HarmonyGrid> teacher, std::span<const HarmonyGrid> student,
                        LossNorm norm);

/// Psi = p_r^t * sqrt(1 + |p_c^t - p_c^s|), computed on values (no gradient).
Grid psi_mask(const Grid& pr_t, const Grid& pc_t, const Grid& pc_s);

/// Sum over levels of sum(Psi * gap) / sum(Psi); a level whose Psi is all
/// zero contributes nothing.
ad::Var hd_loss_weighted(std::span<const HarmonyGrid> teacher, std::span<const HarmonyGrid> student,
                         std::span<const Grid> psi, LossNorm norm);

}  // namespace tbd::harmony
