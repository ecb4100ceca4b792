#include "tbd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tbd::analysis {

namespace {

double best_iou(const geometry::BBox& box, const geometry::GroundTruthSet& truth) {
  double best = 0.0;
  for (const auto& gt : truth.objects) best = std::max(best, geometry::iou(box, gt.box));
  return best;
}

std::vector<std::size_t> by_descending_score(std::span<const geometry::Detection> d) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a].score > d[b].score; });
  return order;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string percent(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

std::string band_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<ScoredPrediction> annotate(std::span<const geometry::Detection> detections,
                                       const geometry::GroundTruthSet& truth) {
  std::vector<ScoredPrediction> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back({d, best_iou(d.box, truth)});
  return out;
}

HarmonyHistogram harmony_histogram(std::span<const ScoredPrediction> predictions, double threshold, double high,
                                   double low) {
  std::vector<ScoredPrediction> copy(predictions.begin(), predictions.end());
  std::vector<std::vector<ScoredPrediction>> one{std::move(copy)};
  return harmony_histogram(std::span<const std::vector<ScoredPrediction>>(one), threshold, high, low);
}

HarmonyHistogram harmony_histogram(std::span<const std::vector<ScoredPrediction>> scenes, double threshold,
                                   double high, double low) {
  if (!(low <= high)) throw std::invalid_argument("harmony_histogram: low band above high band");
  HarmonyHistogram h;
  h.threshold = threshold;
  h.high = high;
  h.low = low;
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (const auto& scene : scenes) {
    for (const auto& p : scene) {
      if (!(p.detection.score > threshold)) continue;
      ++h.count;
      if (p.iou >= high) {
        ++counts[0];
      } else if (p.iou >= low) {
        ++counts[1];
      } else {
        ++counts[2];
      }
    }
  }
  if (h.count > 0) {
    for (int i = 0; i < 3; ++i) h.fractions[i] = static_cast<double>(counts[i]) / static_cast<double>(h.count);
  }
  return h;
}

std::string format_harmony_table(std::span<const std::pair<std::string, HarmonyHistogram>> rows) {
  std::size_t name_width = 5;
  for (const auto& [name, h] : rows) name_width = std::max(name_width, name.size());
  const double high = rows.empty() ? 0.9 : rows.front().second.high;
  const double low = rows.empty() ? 0.5 : rows.front().second.low;
  const std::string cols[3] = {"IOU>=" + band_label(high), band_label(low) + "<=IOU<" + band_label(high),
                               "IOU<" + band_label(low)};
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::ostringstream out;
  out << pad("Model", name_width);
  for (const auto& c : cols) out << " | " << pad(c, 16);
  out << '\n';
  for (const auto& [name, h] : rows) {
    out << pad(name, name_width);
    for (int i = 0; i < 3; ++i) out << " | " << pad(h.empty() ? "-" : percent(h.fractions[i]), 16);
    out << '\n';
  }
  return out.str();
}

std::size_t NmsAudit::inharmonious() const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const AuditEvent& e) { return e.inharmonious; }));
}

NmsAudit nms_audit(std::span<const geometry::Detection> candidates, const geometry::GroundTruthSet& truth,
                   double iou_threshold) {
  const geometry::NmsResult r = geometry::nms_trace(candidates, iou_threshold);
  NmsAudit audit;
  for (const auto& s : r.suppressions) {
    AuditEvent e;
    e.kept = s.kept;
    e.suppressed = s.suppressed;
    e.kept_score = candidates[s.kept].score;
    e.suppressed_score = candidates[s.suppressed].score;
    e.kept_iou = best_iou(candidates[s.kept].box, truth);
    e.suppressed_iou = best_iou(candidates[s.suppressed].box, truth);
    e.inharmonious = e.kept_iou < e.suppressed_iou;
    audit.events.push_back(e);
  }
  return audit;
}

ErrorBreakdown& ErrorBreakdown::operator+=(const ErrorBreakdown& o) {
  correct += o.correct;
  loc += o.loc;
  oth += o.oth;
  bg += o.bg;
  fn += o.fn;
  predictions += o.predictions;
  objects += o.objects;
  return *this;
}

ErrorBreakdown error_analysis(std::span<const geometry::Detection> predictions, const geometry::GroundTruthSet& truth,
                              double floor) {
  ErrorBreakdown out;
  out.objects = truth.size();
  std::vector<bool> matched(truth.size(), false);
  for (std::size_t i : by_descending_score(predictions)) {
    const auto& p = predictions[i];
    if (p.score < floor) continue;
    ++out.predictions;
    double same_free = 0.0, same_any = 0.0, other = 0.0;
    std::size_t free_gt = truth.size();
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const double v = geometry::iou(p.box, truth.objects[k].box);
      if (truth.objects[k].label != p.label) {
        other = std::max(other, v);
        continue;
      }
      same_any = std::max(same_any, v);
      if (!matched[k] && v > same_free) {
        same_free = v;
        free_gt = k;
      }
    }
    if (same_free > 0.5) {
      matched[free_gt] = true;
      ++out.correct;
    } else if (same_any > 0.1) {
      ++out.loc;
    } else if (other > 0.1) {
      ++out.oth;
    } else {
      ++out.bg;
    }
  }
  out.fn = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), false));
  return out;
}

std::vector<PrPoint> pr_curve(std::span<const EvalScene> scenes, int label, double iou_threshold) {
  struct Entry {
    double score;
    std::size_t scene;
    std::size_t index;
  };
  std::vector<Entry> entries;
  std::size_t positives = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t i = 0; i < scenes[s].detections.size(); ++i) {
      if (scenes[s].detections[i].label == label) entries.push_back({scenes[s].detections[i].score, s, i});
    }
    for (const auto& gt : scenes[s].truth.objects) positives += gt.label == label ? 1 : 0;
  }
  if (positives == 0) return {};
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> matched(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) matched[s].assign(scenes[s].truth.size(), false);

  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const auto& e = entries[n];
    const auto& truth = scenes[e.scene].truth;
    const auto& box = scenes[e.scene].detections[e.index].box;
    double best = 0.0;
    std::size_t best_k = truth.size();
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (truth.objects[k].label != label || matched[e.scene][k]) continue;
      const double v = geometry::iou(box, truth.objects[k].box);
      if (v > best) {
        best = v;
        best_k = k;
      }
    }
    if (best_k < truth.size() && best >= iou_threshold) {
      matched[e.scene][best_k] = true;
      ++tp;
    }
    curve.push_back({e.score, static_cast<double>(tp) / static_cast<double>(n + 1),
                     static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

double average_precision(std::span<const PrPoint> curve) {
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * envelope[i];
    prev_recall = curve[i].recall;
  }
  return ap;
}

double toy_map(std::span<const EvalScene> scenes, int classes, double iou_threshold) {
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < classes; ++c) {
    bool present = false;
    for (const auto& s : scenes) {
      for (const auto& gt : s.truth.objects) present = present || gt.label == c;
    }
    if (!present) continue;
    total += average_precision(pr_curve(scenes, c, iou_threshold));
    ++counted;
  }
  return counted == 0 ? 0.0 : total / counted;
}

double mean_harmony_gap(const toy::DetectorNet& a, const toy::DetectorNet& b,
                        std::span<const toy::SyntheticScene> scenes, const toy::DistillConfig& cfg) {
  double sum = 0.0;
  std::size_t cells = 0;
  for (const auto& scene : scenes) {
    const auto la = toy::teacher_levels(a, scene, cfg);
    const auto lb = toy::teacher_levels(b, scene, cfg);
    for (std::size_t l = 0; l < la.size(); ++l) {
      const auto va = la[l].hs.values();
      const auto vb = lb[l].hs.values();
      for (std::size_t i = 0; i < va.size(); ++i) sum += std::fabs(va[i] - vb[i]);
      cells += va.size();
    }
  }
  return cells == 0 ? 0.0 : sum / static_cast<double>(cells);
}

std::vector<EvalScene> evaluate(const toy::DetectorNet& net, std::span<const toy::SyntheticScene> scenes,
                                const toy::DistillConfig& cfg) {
  std::vector<EvalScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back({toy::detect(net, s, cfg.score_floor, cfg.nms_iou), s.truth});
  return out;
}

ModelSummary summarize(const std::string& name, std::span<const EvalScene> scenes, int classes,
                       double score_threshold, double high_band, double error_floor) {
  ModelSummary m;
  m.name = name;
  m.map50 = toy_map(scenes, classes, 0.5);
  std::vector<std::vector<ScoredPrediction>> annotated;
  for (const auto& s : scenes) {
    annotated.push_back(annotate(s.detections, s.truth));
    m.errors += error_analysis(s.detections, s.truth, error_floor);
  }
  m.histogram = harmony_histogram(std::span<const std::vector<ScoredPrediction>>(annotated), score_threshold,
                                  high_band, 0.5);
  return m;
}

std::string line_plot_svg(const std::string& title, std::span<const Series> series) {
  static const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double w = 640, h = 360, left = 60, right = 20, top = 40, bottom = 40;
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;
  bool first = true;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double span_x = n > 1 ? static_cast<double>(n - 1) : 1.0;
  auto px = [&](std::size_t i) { return left + (w - left - right) * static_cast<double>(i) / span_x; };
  auto py = [&](double v) { return top + (h - top - bottom) * (hi - v) / (hi - lo); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" viewBox=\"0 0 640 360\">\n";
  out << "<rect width=\"640\" height=\"360\" fill=\"white\"/>\n";
  out << "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"60\" y1=\"320\" x2=\"620\" y2=\"320\" stroke=\"black\"/>\n";
  out << "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"320\" stroke=\"black\"/>\n";
  out << "<text x=\"55\" y=\"44\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fixed3(hi)
      << "</text>\n";
  out << "<text x=\"55\" y=\"320\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fixed3(lo)
      << "</text>\n";
  out << "<text x=\"620\" y=\"336\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">step "
      << (n == 0 ? 0 : n - 1) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kColours[k % 6];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i) out << ' ';
      out << fixed3(px(i)) << ',' << fixed3(py(std::isfinite(s.values[i]) ? s.values[i] : lo));
    }
    out << "\"/>\n";
    out << "<text x=\"" << 70 + 110 * static_cast<int>(k) << "\" y=\"354\" fill=\"" << colour
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<std::filesystem::path> emit_report(const RunArtifacts& run, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& file, const std::string& text) {
    write_file(dir / file, text);
    written.push_back(dir / file);
  };

  {
    const double high = run.histograms.empty() ? 0.9 : run.histograms.front().second.high;
    const double low = run.histograms.empty() ? 0.5 : run.histograms.front().second.low;
    std::ostringstream t;
    t << "model,iou_ge_" << band_label(high) << ",iou_" << band_label(low) << "_" << band_label(high) << ",iou_lt_"
      << band_label(low) << '\n';
    for (const auto& [name, h] : run.histograms) {
      if (h.high != high || h.low != low) throw std::invalid_argument("emit_report: histograms use different bands");
      t << name << ',' << fixed6(h.fractions[0]) << ',' << fixed6(h.fractions[1]) << ',' << fixed6(h.fractions[2])
        << '\n';
    }
    emit("harmony.csv", t.str());
  }
  {
    std::ostringstream t;
    t << "model,correct,loc,oth,bg,fn\n";
    for (const auto& [name, e] : run.errors) {
      t << name << ',' << e.correct << ',' << e.loc << ',' << e.oth << ',' << e.bg << ',' << e.fn << '\n';
    }
    emit("errors.csv", t.str());
  }
  {
    std::ostringstream t;
    std::ostringstream w;
    t << "model,step,detector,hd,tfd,total\n";
    w << "model,step,level,t0,t1\n";
    for (const auto& [name, trace] : run.traces) {
      for (const auto& s : trace) {
        t << name << ',' << s.step << ',' << fixed6(s.detector) << ',' << fixed6(s.hd) << ',' << fixed6(s.tfd) << ','
          << fixed6(s.total) << '\n';
        for (std::size_t l = 0; l < s.task_weights.size(); ++l) {
          w << name << ',' << s.step << ',' << l << ',' << fixed6(s.task_weights[l][0]) << ','
            << fixed6(s.task_weights[l][1]) << '\n';
        }
      }
    }
    emit("traces.csv", t.str());
    emit("task_weights.csv", w.str());
  }
  for (const auto& [name, trace] : run.traces) {
    std::vector<Series> losses{{"detector", {}}, {"hd", {}}, {"tfd", {}}, {"total", {}}};
    std::size_t levels = 0;
    for (const auto& s : trace) levels = std::max(levels, s.task_weights.size());
    std::vector<Series> weights;
    for (std::size_t l = 0; l < levels; ++l) weights.push_back({"T0 level " + std::to_string(l), {}});
    for (const auto& s : trace) {
      losses[0].values.push_back(s.detector);
      losses[1].values.push_back(s.hd);
      losses[2].values.push_back(s.tfd);
      losses[3].values.push_back(s.total);
      for (std::size_t l = 0; l < levels; ++l) {
        weights[l].values.push_back(l < s.task_weights.size() ? s.task_weights[l][0] : 0.0);
      }
    }
    emit("loss_" + name + ".svg", line_plot_svg("loss components: " + name, losses));
    if (levels > 0) emit("task_weights_" + name + ".svg", line_plot_svg("task weight T0: " + name, weights));
  }
  return written;
}

std::vector<AblationRow> hd_ablation_grid(const toy::DistillConfig& base) {
  std::vector<AblationRow> rows;
  for (auto v : {harmony::HsVariant::Tanh, harmony::HsVariant::Exp, harmony::HsVariant::Log}) {
    for (auto n : {harmony::LossNorm::L1, harmony::LossNorm::L2}) {
      toy::DistillConfig c = base;
      c.hs_variant = v;
      c.hd_norm = n;
      rows.push_back({std::string(harmony::to_string(v)) + "_" + harmony::to_string(n), c});
    }
  }
  return rows;
}

std::vector<AblationRow> mask_ablation_grid(const toy::DistillConfig& base) {
  auto make = [&](const char* name, bool whole, bool twg, double wc, double wr) {
    toy::DistillConfig c = base;
    c.whole_feature = whole;
    c.twg = twg;
    c.omega_cls = wc;
    c.omega_reg = wr;
    return AblationRow{name, c};
  };
  return {make("whole", true, false, 1.0, 0.0), make("cls", false, false, 1.0, 0.0),
          make("reg", false, false, 0.0, 1.0), make("cls+reg_fixed", false, false, 0.5, 0.5),
          make("cls+reg_dynamic", false, true, 0.5, 0.5)};
}

std::vector<AblationResult> run_ablation(std::span<const AblationRow> rows, const AblationSetup& setup) {
  if (setup.teacher == nullptr || setup.student == nullptr) {
    throw std::invalid_argument("run_ablation: teacher and student are required");
  }
  const std::vector<toy::SyntheticScene> train_scenes(setup.train.begin(), setup.train.end());
  std::vector<AblationResult> out;
  for (const auto& row : rows) {
    toy::TrainingConfig tc = setup.training;
    tc.distill = row.distill;
    const toy::TrainResult r = toy::train(*setup.student, train_scenes, tc, setup.teacher);
    const auto evals = evaluate(r.net, setup.eval, row.distill);
    const ModelSummary m =
        summarize(row.name, evals, r.net.config().classes, setup.score_threshold, setup.high_band);
    out.push_back({row.name, m.map50, m.histogram.harmonious(),
                   mean_harmony_gap(*setup.teacher, r.net, setup.eval, row.distill), r.trace.back().hd,
                   r.trace.back().tfd});
  }
  return out;
}

std::string ablation_csv(std::span<const AblationResult> rows) {
  std::ostringstream t;
  t << "setting,map50,harmonious,harmony_gap,final_hd,final_tfd\n";
  for (const auto& r : rows) {
    t << r.name << ',' << fixed6(r.map50) << ',' << fixed6(r.harmonious) << ',' << fixed6(r.harmony_gap) << ','
      << fixed6(r.final_hd) << ',' << fixed6(r.final_tfd) << '\n';
  }
  return t.str();
}

}  // namespace tbd::analysis
