#include "tbd/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace tbd::cli {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

const char* pc_name(signals::PcMode m) { return m == signals::PcMode::Sigmoid ? "sigmoid" : "softmax"; }

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError(key, "config key '" + key + "': " + why);
}

void check_types(const json& defaults, const json& layer, const std::string& origin) {
  if (!layer.is_object()) throw ConfigError("", origin + " must be a JSON object");
  for (const auto& [key, value] : layer.items()) {
    if (!defaults.contains(key)) throw ConfigError(key, "unknown config key '" + key + "' in " + origin);
    const json& d = defaults[key];
    const bool ok = d.is_string() ? value.is_string()
                    : d.is_number_integer() ? value.is_number_integer()
                    : d.is_number() ? value.is_number()
                                    : value.type() == d.type();
    if (!ok) {
      bad(key, std::string("expected ") + (d.is_string() ? "a string" : d.is_number_integer() ? "an integer" : "a number") +
                   " in " + origin);
    }
    if (value.is_number_integer() && d.is_number_unsigned() && value.get<std::int64_t>() < 0) {
      bad(key, "must be non-negative");
    }
  }
}

template <class T>
T take(const json& j, const char* key) {
  return j.at(key).get<T>();
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = take<std::uint64_t>(j, "seed");
  auto& s = c.scenario;
  s.extent = take<double>(j, "extent");
  s.classes = take<int>(j, "classes");
  s.min_objects = take<int>(j, "min_objects");
  s.max_objects = take<int>(j, "max_objects");
  s.min_size = take<double>(j, "min_size");
  s.max_size = take<double>(j, "max_size");
  s.noise = take<double>(j, "noise");
  s.cell = take<double>(j, "cell");
  c.train_scenes = take<int>(j, "train_scenes");
  c.eval_scenes = take<int>(j, "eval_scenes");
  c.teacher_width = take<int>(j, "teacher_width");
  c.student_width = take<int>(j, "student_width");
  c.context_radius = take<int>(j, "context_radius");
  c.teacher_steps = take<int>(j, "teacher_steps");
  auto& t = c.training;
  t.steps = take<int>(j, "steps");
  t.learning_rate = take<double>(j, "learning_rate");
  t.batch = take<int>(j, "batch");
  t.seed = c.seed;
  auto& d = t.distill;
  d.alpha = take<double>(j, "alpha");
  d.beta = take<double>(j, "beta");
  try {
    d.hs_variant = harmony::parse_variant(take<std::string>(j, "hs_variant"));
  } catch (const std::invalid_argument&) {
    bad("hs_variant", "expected one of tanh, exp, log");
  }
  try {
    d.hd_norm = harmony::parse_norm(take<std::string>(j, "hd_norm"));
  } catch (const std::invalid_argument&) {
    bad("hd_norm", "expected l1 or l2");
  }
  const auto pc = take<std::string>(j, "pc_mode");
  if (pc == "softmax") {
    d.pc_mode = signals::PcMode::SpatialSoftmax;
  } else if (pc == "sigmoid") {
    d.pc_mode = signals::PcMode::Sigmoid;
  } else {
    bad("pc_mode", "expected softmax or sigmoid");
  }
  const auto hw = take<std::string>(j, "hd_weighting");
  if (hw != "weighted" && hw != "uniform") bad("hd_weighting", "expected weighted or uniform");
  d.hd_weighted = hw == "weighted";
  const auto fm = take<std::string>(j, "feature_mask");
  if (fm != "task" && fm != "whole") bad("feature_mask", "expected task or whole");
  d.whole_feature = fm == "whole";
  d.omega_cls = take<double>(j, "omega_cls");
  d.omega_reg = take<double>(j, "omega_reg");
  apply_twg(take<std::string>(j, "twg"), d);
  d.nms_iou = take<double>(j, "nms_iou");
  d.score_floor = take<double>(j, "score_floor");
  c.score_threshold = take<double>(j, "score_threshold");
  c.high_band = take<double>(j, "high_band");
  c.error_floor = take<double>(j, "error_floor");
  c.gradcheck_points = take<int>(j, "gradcheck_points");
  c.out = take<std::string>(j, "out");
  c.data = take<std::string>(j, "data");
  c.eval_data = take<std::string>(j, "eval_data");
  c.teacher = take<std::string>(j, "teacher");
  return c;
}

void validate(const RunConfig& c) {
  const auto& s = c.scenario;
  const auto& t = c.training;
  const auto& d = t.distill;
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) bad(key, "must be positive, got " + fmt(v));
  };
  auto non_negative = [](const char* key, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) bad(key, "must be non-negative, got " + fmt(v));
  };
  auto unit = [](const char* key, double v) {
    if (!(v >= 0.0 && v <= 1.0)) bad(key, "must lie in [0, 1], got " + fmt(v));
  };
  positive("extent", s.extent);
  if (s.classes < 2) bad("classes", "at least two classes are required");
  if (s.min_objects < 0) bad("min_objects", "must be non-negative");
  if (s.max_objects < s.min_objects) bad("max_objects", "must be at least min_objects");
  positive("min_size", s.min_size);
  if (s.max_size < s.min_size) bad("max_size", "must be at least min_size");
  if (s.max_size > s.extent) bad("max_size", "boxes cannot exceed the scene extent");
  non_negative("noise", s.noise);
  positive("cell", s.cell);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    bad("cell", e.what());
  }
  if (c.train_scenes < 1) bad("train_scenes", "must be positive");
  if (c.eval_scenes < 1) bad("eval_scenes", "must be positive");
  if (c.teacher_width < 1) bad("teacher_width", "must be positive");
  if (c.student_width < 1) bad("student_width", "must be positive");
  if (c.context_radius < 0) bad("context_radius", "must be non-negative");
  if (c.teacher_steps < 1) bad("teacher_steps", "must be positive");
  if (t.steps < 1) bad("steps", "must be positive");
  positive("learning_rate", t.learning_rate);
  if (t.batch < 1) bad("batch", "must be positive");
  non_negative("alpha", d.alpha);
  non_negative("beta", d.beta);
  non_negative("omega_cls", d.omega_cls);
  non_negative("omega_reg", d.omega_reg);
  if (!(d.nms_iou > 0.0 && d.nms_iou <= 1.0)) bad("nms_iou", "must lie in (0, 1]");
  if (!(d.score_floor >= 0.0 && d.score_floor < 1.0)) bad("score_floor", "must lie in [0, 1)");
  unit("score_threshold", c.score_threshold);
  unit("high_band", c.high_band);
  if (c.high_band < 0.5) bad("high_band", "must be at least 0.5, the lower band edge");
  unit("error_floor", c.error_floor);
  if (c.gradcheck_points < 1) bad("gradcheck_points", "must be positive");
  if (c.out.empty()) bad("out", "must not be empty");
  toy::DetectorConfig probe;
  probe.classes = s.classes;
  probe.extent = s.extent;
  probe.stride = s.cell;
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    bad("extent", e.what());
  }
}

}  // namespace

void apply_twg(const std::string& spec, toy::DistillConfig& d) {
  if (spec == "on") {
    d.twg = true;
  } else if (spec == "off") {
    d.twg = false;
  } else if (spec.rfind("fixed:", 0) == 0) {
    const std::string rest = spec.substr(6);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) bad("twg", "expected fixed:<cls>,<reg>, got '" + spec + "'");
    try {
      std::size_t used_a = 0, used_b = 0;
      const std::string a = rest.substr(0, comma), b = rest.substr(comma + 1);
      d.omega_cls = std::stod(a, &used_a);
      d.omega_reg = std::stod(b, &used_b);
      if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      bad("twg", "expected fixed:<cls>,<reg> with numeric weights, got '" + spec + "'");
    }
    if (!(d.omega_cls >= 0.0) || !(d.omega_reg >= 0.0)) bad("twg", "fixed weights must be non-negative");
    d.twg = false;
  } else {
    bad("twg", "expected on, off or fixed:<cls>,<reg>, got '" + spec + "'");
  }
}

std::string twg_string(const toy::DistillConfig& d) { return d.twg ? "on" : "off"; }

json to_json(const RunConfig& c) {
  const auto& s = c.scenario;
  const auto& t = c.training;
  const auto& d = t.distill;
  return {{"seed", c.seed},
          {"extent", s.extent},
          {"classes", s.classes},
          {"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"min_size", s.min_size},
          {"max_size", s.max_size},
          {"noise", s.noise},
          {"cell", s.cell},
          {"train_scenes", c.train_scenes},
          {"eval_scenes", c.eval_scenes},
          {"teacher_width", c.teacher_width},
          {"student_width", c.student_width},
          {"context_radius", c.context_radius},
          {"teacher_steps", c.teacher_steps},
          {"steps", t.steps},
          {"learning_rate", t.learning_rate},
          {"batch", t.batch},
          {"alpha", d.alpha},
          {"beta", d.beta},
          {"hs_variant", harmony::to_string(d.hs_variant)},
          {"hd_norm", harmony::to_string(d.hd_norm)},
          {"pc_mode", pc_name(d.pc_mode)},
          {"hd_weighting", d.hd_weighted ? "weighted" : "uniform"},
          {"feature_mask", d.whole_feature ? "whole" : "task"},
          {"twg", twg_string(d)},
          {"omega_cls", d.omega_cls},
          {"omega_reg", d.omega_reg},
          {"nms_iou", d.nms_iou},
          {"score_floor", d.score_floor},
          {"score_threshold", c.score_threshold},
          {"high_band", c.high_band},
          {"error_floor", c.error_floor},
          {"gradcheck_points", c.gradcheck_points},
          {"out", c.out},
          {"data", c.data},
          {"eval_data", c.eval_data},
          {"teacher", c.teacher}};
}

RunConfig resolve_config(const json& layer) { return resolve_config(std::nullopt, layer); }

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const json& overrides) {
  const json defaults = to_json(RunConfig{});
  json merged = defaults;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("", "cannot open config file '" + file->string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
      doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
      throw ConfigError("", "config file '" + file->string() + "' is not valid JSON: " + e.what());
    }
    check_types(defaults, doc, "config file '" + file->string() + "'");
    merged.update(doc);
  }
  if (!overrides.is_null()) {
    check_types(defaults, overrides, "command-line flags");
    merged.update(overrides);
  }
  RunConfig c = from_json(merged);
  validate(c);
  return c;
}

}  // namespace tbd::cli
