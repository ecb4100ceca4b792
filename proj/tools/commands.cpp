#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "tbd/analysis.hpp"
#include "tbd/config.hpp"
#include "tbd/gradient_suite.hpp"
#include "tbd/rng.hpp"
#include "tbd/serialization.hpp"

namespace tbd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradientTolerance = 1e-4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Model {
  std::string name;
  toy::DetectorNet net;
};

struct Context {
  RunConfig cfg;
  std::vector<std::string> students;
  std::string ablation;
  std::ostream& out;
};

toy::DetectorConfig detector_config(const RunConfig& c, int width) {
  toy::DetectorConfig d;
  d.classes = c.scenario.classes;
  d.width = width;
  d.context_radius = c.context_radius;
  d.extent = c.scenario.extent;
  d.stride = c.scenario.cell;
  return d;
}

std::vector<toy::SyntheticScene> training_scenes(const RunConfig& c) {
  if (!c.data.empty()) return io::load_scenes(c.data);
  return toy::generate_dataset(c.scenario, mix_seed(c.seed, 1), c.train_scenes);
}

std::vector<toy::SyntheticScene> held_out_scenes(const RunConfig& c) {
  if (!c.eval_data.empty()) return io::load_scenes(c.eval_data);
  return toy::generate_dataset(c.scenario, mix_seed(c.seed, 2), c.eval_scenes);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void check_scene_shape(const toy::DetectorNet& net, const std::vector<toy::SyntheticScene>& scenes,
                       const std::string& what) {
  for (const auto& s : scenes) {
    if (s.input.rows() != net.config().level_size(0) || s.input.channels() != net.config().classes) {
      throw std::runtime_error(what + " do not match the detector (input " + s.input.shape().str() + ")");
    }
  }
}

toy::DetectorNet require_teacher(const RunConfig& c, const char* command) {
  if (c.teacher.empty()) throw UsageError(std::string(command) + " requires --teacher <checkpoint>");
  return io::load_checkpoint(c.teacher);
}

std::vector<Model> load_students(const Context& ctx, const char* command) {
  if (ctx.students.empty()) throw UsageError(std::string(command) + " requires at least one --student <checkpoint>");
  std::vector<Model> models;
  std::map<std::string, int> seen;
  for (const auto& path : ctx.students) {
    std::string name = fs::path(path).stem().string();
    if (name.empty()) name = "student";
    if (const int n = seen[name]++; n > 0) name += "_" + std::to_string(n + 1);
    models.push_back({name, io::load_checkpoint(path)});
  }
  return models;
}

int gen_data(Context& ctx) {
  const fs::path dir = ctx.cfg.out;
  const auto train = training_scenes(ctx.cfg);
  const auto eval = held_out_scenes(ctx.cfg);
  io::save_scenes(dir / "train_scenes.json", train);
  io::save_scenes(dir / "eval_scenes.json", eval);
  ctx.out << "wrote " << train.size() << " training and " << eval.size() << " held-out scenes to " << dir.string()
          << '\n';
  return 0;
}

int train_teacher(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto scenes = training_scenes(c);
  const auto init = toy::DetectorNet::create(detector_config(c, c.teacher_width), mix_seed(c.seed, 3));
  check_scene_shape(init, scenes, "training scenes");
  toy::TrainingConfig tc = c.training;
  tc.steps = c.teacher_steps;
  const auto result = toy::train(init, scenes, tc);
  const fs::path dir = c.out;
  io::save_checkpoint(dir / "teacher.json", result.net);
  analysis::RunArtifacts run;
  run.traces = {{"teacher", result.trace}};
  analysis::emit_report(run, dir / "report");
  ctx.out << "teacher trained for " << tc.steps << " steps, final detector loss "
          << analysis::fixed6(result.trace.back().detector) << "; checkpoint " << (dir / "teacher.json").string()
          << '\n';
  return 0;
}

int distill(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto teacher = require_teacher(c, "distill");
  const auto scenes = training_scenes(c);
  const auto init = toy::DetectorNet::create(detector_config(c, c.student_width), mix_seed(c.seed, 4));
  check_scene_shape(init, scenes, "training scenes");
  const auto result = toy::train(init, scenes, c.training, &teacher);
  const fs::path dir = c.out;
  io::save_checkpoint(dir / "student.json", result.net);
  io::write_json(dir / "distill_params.json",
                 {{"format", "tbd-distill-params"}, {"version", 1}, {"tensors", io::to_json(result.distill_params)}});
  analysis::RunArtifacts run;
  run.traces = {{"student", result.trace}};
  analysis::emit_report(run, dir / "report");
  const auto& first = result.trace.front();
  const auto& last = result.trace.back();
  ctx.out << "distilled for " << c.training.steps << " steps (alpha " << c.training.distill.alpha << ", beta "
          << c.training.distill.beta << ")\n"
          << "  detector " << analysis::fixed6(first.detector) << " -> " << analysis::fixed6(last.detector) << '\n'
          << "  hd       " << analysis::fixed6(first.hd) << " -> " << analysis::fixed6(last.hd) << '\n'
          << "  tfd      " << analysis::fixed6(first.tfd) << " -> " << analysis::fixed6(last.tfd) << '\n'
          << "checkpoint " << (dir / "student.json").string() << '\n';
  return 0;
}

struct Evaluated {
  std::string name;
  analysis::ModelSummary summary;
  std::optional<double> gap;
  analysis::NmsAudit audit;
};

std::vector<Evaluated> evaluate_models(const Context& ctx, const std::vector<Model>& models,
                                       const std::optional<toy::DetectorNet>& teacher,
                                       const std::vector<toy::SyntheticScene>& scenes, bool audit) {
  const auto& c = ctx.cfg;
  const auto& d = c.training.distill;
  std::vector<Evaluated> out;
  auto one = [&](const std::string& name, const toy::DetectorNet& net, bool is_teacher) {
    check_scene_shape(net, scenes, "held-out scenes");
    Evaluated e;
    e.name = name;
    const auto evals = analysis::evaluate(net, scenes, d);
    e.summary = analysis::summarize(name, evals, net.config().classes, c.score_threshold, c.high_band, c.error_floor);
    if (teacher && !is_teacher) e.gap = analysis::mean_harmony_gap(*teacher, net, scenes, d);
    if (audit) {
      for (const auto& s : scenes) {
        const auto levels = toy::predict_levels(net, s);
        const auto cands = toy::candidates(levels, d.score_floor);
        const auto a = analysis::nms_audit(cands, s.truth, d.nms_iou);
        e.audit.events.insert(e.audit.events.end(), a.events.begin(), a.events.end());
      }
    }
    out.push_back(std::move(e));
  };
  if (teacher) one("teacher", *teacher, true);
  for (const auto& m : models) one(m.name, m.net, false);
  return out;
}

std::string metrics_csv(const std::vector<Evaluated>& rows) {
  std::ostringstream t;
  t << "model,map50,harmonious,confident,harmony_gap\n";
  for (const auto& r : rows) {
    t << r.name << ',' << analysis::fixed6(r.summary.map50) << ',' << analysis::fixed6(r.summary.histogram.harmonious())
      << ',' << r.summary.histogram.count << ',' << (r.gap ? analysis::fixed6(*r.gap) : "") << '\n';
  }
  return t.str();
}

int eval(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto models = load_students(ctx, "eval");
  std::optional<toy::DetectorNet> teacher;
  if (!c.teacher.empty()) teacher = io::load_checkpoint(c.teacher);
  const auto scenes = held_out_scenes(c);
  const auto rows = evaluate_models(ctx, models, teacher, scenes, false);

  const fs::path dir = c.out;
  analysis::RunArtifacts run;
  for (const auto& r : rows) {
    run.histograms.emplace_back(r.name, r.summary.histogram);
    run.errors.emplace_back(r.name, r.summary.errors);
    std::vector<std::pair<std::string, analysis::HarmonyHistogram>> single{{r.name, r.summary.histogram}};
    const std::string table = analysis::format_harmony_table(single);
    write_text(dir / ("harmony_" + r.name + ".txt"), table);
    ctx.out << "predictions scoring above " << c.score_threshold << " (" << r.summary.histogram.count << ")\n"
            << table << '\n';
  }
  analysis::emit_report(run, dir);
  write_text(dir / "metrics.csv", metrics_csv(rows));
  for (const auto& r : rows) {
    ctx.out << r.name << ": toy-mAP@0.5 " << analysis::fixed6(r.summary.map50);
    if (r.gap) ctx.out << ", mean |HS^t - HS^s| " << analysis::fixed6(*r.gap);
    ctx.out << '\n';
  }
  return 0;
}

int ablate(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto teacher = require_teacher(c, "analyze --ablation");
  const auto train_scenes = training_scenes(c);
  const auto eval_scenes = held_out_scenes(c);
  const auto student = toy::DetectorNet::create(detector_config(c, c.student_width), mix_seed(c.seed, 4));
  check_scene_shape(student, train_scenes, "training scenes");
  std::vector<analysis::AblationRow> rows;
  if (ctx.ablation == "hd") {
    rows = analysis::hd_ablation_grid(c.training.distill);
  } else if (ctx.ablation == "mask") {
    rows = analysis::mask_ablation_grid(c.training.distill);
  } else {
    throw UsageError("--ablation expects hd or mask, got '" + ctx.ablation + "'");
  }
  analysis::AblationSetup setup;
  setup.teacher = &teacher;
  setup.student = &student;
  setup.train = train_scenes;
  setup.eval = eval_scenes;
  setup.training = c.training;
  setup.score_threshold = c.score_threshold;
  setup.high_band = c.high_band;
  const auto results = analysis::run_ablation(rows, setup);
  const std::string table = analysis::ablation_csv(results);
  write_text(fs::path(c.out) / ("ablation_" + ctx.ablation + ".csv"), table);
  ctx.out << table;
  return 0;
}

int analyze(Context& ctx) {
  if (!ctx.ablation.empty()) return ablate(ctx);
  const auto& c = ctx.cfg;
  const auto models = load_students(ctx, "analyze");
  std::optional<toy::DetectorNet> teacher;
  if (!c.teacher.empty()) teacher = io::load_checkpoint(c.teacher);
  const auto scenes = held_out_scenes(c);
  const auto rows = evaluate_models(ctx, models, teacher, scenes, true);

  const fs::path dir = c.out;
  analysis::RunArtifacts run;
  std::ostringstream audit;
  audit << "model,suppressions,inharmonious,inharmonious_fraction\n";
  std::vector<std::pair<std::string, analysis::HarmonyHistogram>> table_rows;
  for (const auto& r : rows) {
    run.histograms.emplace_back(r.name, r.summary.histogram);
    run.errors.emplace_back(r.name, r.summary.errors);
    table_rows.emplace_back(r.name, r.summary.histogram);
    const auto n = r.audit.events.size();
    const auto bad = r.audit.inharmonious();
    audit << r.name << ',' << n << ',' << bad << ','
          << analysis::fixed6(n == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(n)) << '\n';
  }
  analysis::emit_report(run, dir);
  write_text(dir / "nms_audit.csv", audit.str());
  write_text(dir / "metrics.csv", metrics_csv(rows));
  ctx.out << analysis::format_harmony_table(table_rows) << '\n' << audit.str();
  return 0;
}

int gradcheck(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto entries = run_gradient_suite(c.seed, c.gradcheck_points);
  std::ostringstream t;
  t << "loss,points,coordinates,tie_flips,max_relative_error\n";
  bool ok = true;
  for (const auto& e : entries) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", e.max_relative_error);
    t << e.loss << ',' << e.points << ',' << e.coordinates << ',' << e.tie_flips << ',' << err << '\n';
    ctx.out << (e.max_relative_error < kGradientTolerance ? "ok   " : "FAIL ") << e.loss << " max relative error "
            << err << " over " << e.points << " points\n";
    ok = ok && e.max_relative_error < kGradientTolerance;
  }
  write_text(fs::path(c.out) / "gradcheck.csv", t.str());
  return ok ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Task-balanced distillation on a synthetic dense detector", "tbd"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, teacher, hs_variant, hd_norm, pc_mode, twg, data, eval_data;
  std::optional<int> steps, teacher_steps;
  std::optional<double> alpha, beta;
  std::vector<std::string> students;
  std::string ablation;

  app.add_option("--config", config_file, "JSON file of configuration keys");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--teacher", teacher, "teacher checkpoint");
  app.add_option("--steps", steps, "student / distillation gradient steps");
  app.add_option("--teacher-steps", teacher_steps, "teacher gradient steps");
  app.add_option("--alpha", alpha, "harmony distillation weight");
  app.add_option("--beta", beta, "feature distillation weight");
  app.add_option("--hs-variant", hs_variant, "tanh, exp or log");
  app.add_option("--hd-norm", hd_norm, "l1 or l2");
  app.add_option("--pc-mode", pc_mode, "softmax or sigmoid");
  app.add_option("--twg", twg, "on, off or fixed:<cls>,<reg>");
  app.add_option("--data", data, "training scenes file");
  app.add_option("--eval-data", eval_data, "held-out scenes file");

  const std::map<std::string, int (*)(Context&)> commands = {
      {"gen-data", gen_data}, {"train-teacher", train_teacher}, {"distill", distill},
      {"eval", eval},         {"analyze", analyze},             {"gradcheck", gradcheck}};
  std::map<std::string, CLI::App*> subs;
  subs["gen-data"] = app.add_subcommand("gen-data", "write training and held-out scenes");
  subs["train-teacher"] = app.add_subcommand("train-teacher", "train the wide teacher detector");
  subs["distill"] = app.add_subcommand("distill", "train a student against a frozen teacher");
  subs["eval"] = app.add_subcommand("eval", "toy-mAP and harmony tables for student checkpoints");
  subs["analyze"] = app.add_subcommand("analyze", "full report, NMS audit, or an ablation grid");
  subs["gradcheck"] = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  for (const char* name : {"eval", "analyze"}) {
    subs[name]->add_option("--student", students, "student checkpoint (repeatable)");
  }
  subs["analyze"]->add_option("--ablation", ablation, "hd or mask grid");

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  json overrides = json::object();
  if (seed) overrides["seed"] = *seed;
  if (out_dir) overrides["out"] = *out_dir;
  if (teacher) overrides["teacher"] = *teacher;
  if (steps) overrides["steps"] = *steps;
  if (teacher_steps) overrides["teacher_steps"] = *teacher_steps;
  if (alpha) overrides["alpha"] = *alpha;
  if (beta) overrides["beta"] = *beta;
  if (hs_variant) overrides["hs_variant"] = *hs_variant;
  if (hd_norm) overrides["hd_norm"] = *hd_norm;
  if (pc_mode) overrides["pc_mode"] = *pc_mode;
  if (twg) overrides["twg"] = *twg;
  if (data) overrides["data"] = *data;
  if (eval_data) overrides["eval_data"] = *eval_data;

  try {
    RunConfig cfg = resolve_config(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, overrides);
    if (command == "distill" && cfg.teacher.empty()) throw UsageError("distill requires --teacher <checkpoint>");
    fs::create_directories(cfg.out);
    io::write_json(fs::path(cfg.out) / "config.json", to_json(cfg));
    Context ctx{cfg, students, ablation, out};
    return commands.at(command)(ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const toy::TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tbd::cli
