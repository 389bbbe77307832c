// overload: command-line driver for the NMS cost lab, the attack engine and the
// pipeline simulator. Exit codes: 0 ok, 2 config, 3 data, 4 fit degenerate.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "overload/attack.hpp"
#include "overload/costmodel.hpp"
#include "overload/detector.hpp"
#include "overload/errors.hpp"
#include "overload/io.hpp"
#include "overload/metrics.hpp"
#include "overload/nms.hpp"
#include "overload/nms_kernels.hpp"
#include "overload/pipeline_sim.hpp"

namespace fs = std::filesystem;
using overload::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitFit = 4;

std::uint64_t default_seed() {
  const char* env = std::getenv("OVERLOAD_SEED");
  if (env == nullptr || *env == '\0') return 0;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(env, &pos, 0);
    if (pos != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw overload::ConfigError(std::string("OVERLOAD_SEED is not an integer: '") + env + "'");
  }
}

struct Common {
  std::string out = ".";
  std::uint64_t seed = 0;
  std::string config;
  std::string format = "table";
};

bool given(const CLI::App* app, const char* name) { return app->count(name) > 0; }

json config_section(const Common& c, const char* section) {
  if (c.config.empty()) return json::object();
  json j = overload::io::read_json_file(c.config);
  if (j.contains(section)) return j.at(section);
  return j;
}

void write_manifest(const Common& c, const std::string& cmd, const json& resolved, int argc, char** argv) {
  json args = json::array();
  for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
  json m{{"subcommand", cmd},
         {"seed", c.seed},
         {"format", c.format},
         {"config_file", c.config},
         {"config", resolved},
         {"threads", overload::kernels::max_threads()},
         {"argv", args}};
  overload::io::write_json_file(fs::path(c.out) / "manifest.json", m);
}

std::vector<overload::Scenario> scenarios_from(const std::vector<std::string>& names) {
  std::vector<overload::Scenario> out;
  for (const auto& n : names) {
    if (n == "all") {
      out = {overload::Scenario::worst, overload::Scenario::best, overload::Scenario::random};
      return out;
    }
    out.push_back(overload::parse_scenario(n));
  }
  return out;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::vector<std::string> scenarios{"all"};
  std::size_t n = 1000;
  std::size_t classes = 4;
  bool image = false;
  std::optional<std::uint64_t> seed_image;
  std::size_t height = 64;
  std::size_t width = 64;
  double contrast = overload::kDefaultNoiseContrast;
};

int run_gen(const Common& c, const GenArgs& a, int argc, char** argv) {
  fs::create_directories(c.out);
  json files = json::array();
  json resolved;
  if (a.image) {
    const std::uint64_t s = a.seed_image.value_or(c.seed);
    const auto img = overload::seeded_noise_image(s, a.height, a.width, a.contrast);
    const fs::path p = fs::path(c.out) / ("noise-" + std::to_string(s) + ".ovl");
    overload::io::write_image(p, img);
    files.push_back(p.string());
    resolved = {{"image", true}, {"seed_image", s}, {"height", a.height}, {"width", a.width}, {"contrast", a.contrast}};
  } else {
    for (auto sc : scenarios_from(a.scenarios)) {
      const auto set = overload::gen_synthetic(sc, a.n, a.classes, c.seed);
      const fs::path p = fs::path(c.out) / (std::string(overload::to_string(sc)) + ".csv");
      overload::io::write_candidates_csv(p, set);
      files.push_back(p.string());
    }
    resolved = {{"scenarios", a.scenarios}, {"n", a.n}, {"classes", a.classes}};
  }
  resolved["files"] = files;
  write_manifest(c, "gen", resolved, argc, argv);
  for (const auto& f : files) std::cout << f.get<std::string>() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- nms

struct NmsArgs {
  std::string input;
  std::vector<float> tiou;
  float t_conf = 0.25f;
  std::string metric = "iou";
  bool class_agnostic = false;
  std::size_t max_detections = 300;
  std::size_t max_candidates = 0;
  double timeout = 0.5;
  std::string kernel = "matrix";
  std::string backend = "omp";
};

int run_nms(const Common& c, const NmsArgs& a, const CLI::App* app, int argc, char** argv) {
  overload::NmsConfig cfg;
  overload::io::apply_json(config_section(c, "nms"), cfg);
  if (given(app, "--t-conf")) cfg.t_conf = a.t_conf;
  if (given(app, "--metric")) cfg.metric = overload::parse_overlap_metric(a.metric);
  if (given(app, "--class-agnostic")) cfg.class_aware = !a.class_agnostic;
  if (given(app, "--max-detections")) cfg.max_detections = a.max_detections;
  if (given(app, "--max-candidates")) {
    cfg.max_candidates = a.max_candidates > 0 ? std::optional<std::size_t>(a.max_candidates) : std::nullopt;
  }
  if (given(app, "--timeout")) {
    cfg.timeout = a.timeout > 0.0 ? std::optional<overload::Seconds>(overload::Seconds(a.timeout)) : std::nullopt;
  }
  if (given(app, "--backend")) {
    if (a.backend != "omp" && a.backend != "serial") throw overload::ConfigError("unknown backend '" + a.backend + "'");
    cfg.backend = a.backend == "omp" ? overload::KernelBackend::omp : overload::KernelBackend::serial;
  }
  if (a.kernel != "matrix" && a.kernel != "greedy") throw overload::ConfigError("unknown kernel '" + a.kernel + "'");
  std::vector<float> sweep = a.tiou;
  if (sweep.empty()) sweep.push_back(cfg.t_iou);
  for (float t : sweep) {
    overload::NmsConfig probe = cfg;
    probe.t_iou = t;
    probe.validate();
  }

  const auto set = overload::io::read_candidates_csv(a.input);
  fs::create_directories(c.out);
  json resolved = overload::io::to_json(cfg);
  resolved["input"] = a.input;
  resolved["kernel"] = a.kernel;
  resolved["tiou"] = sweep;
  write_manifest(c, "nms", resolved, argc, argv);

  json reports = json::array();
  std::printf("%-8s %10s %12s %8s %12s %9s %7s\n", "t_iou", "n_input", "n_pairwise", "kept", "elapsed_ms", "timed_out",
              "capped");
  for (float t : sweep) {
    overload::NmsConfig run = cfg;
    run.t_iou = t;
    const auto r = a.kernel == "matrix" ? overload::nms_matrix(set, run) : overload::nms_greedy(set, run);
    json j = overload::io::to_json(r);
    j["t_iou"] = t;
    reports.push_back(j);
    std::printf("%-8.2f %10zu %12llu %8zu %12.3f %9s %7s\n", static_cast<double>(t), r.n_input,
                static_cast<unsigned long long>(r.n_pairwise), r.kept.size(), r.elapsed.count() * 1e3,
                r.timed_out ? "yes" : "no", r.capped ? "yes" : "no");
  }
  overload::io::write_json_file(fs::path(c.out) / "nms_report.json", sweep.size() == 1 ? reports[0] : reports);
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<std::size_t> sizes{100, 200, 500, 1000, 2000, 5000, 10000};
  std::vector<std::string> scenarios{"all"};
  std::size_t repeats = 3;
  std::size_t classes = 4;
  double factor = 2.0;
  double safety = 30.0;
  std::string backend = "omp";
};

int run_bench(const Common& c, const BenchArgs& a, const CLI::App* app, int argc, char** argv) {
  overload::NmsConfig cfg;
  overload::io::apply_json(config_section(c, "nms"), cfg);
  if (given(app, "--backend")) {
    if (a.backend != "omp" && a.backend != "serial") throw overload::ConfigError("unknown backend '" + a.backend + "'");
    cfg.backend = a.backend == "omp" ? overload::KernelBackend::omp : overload::KernelBackend::serial;
  }
  if (a.sizes.empty()) throw overload::ConfigError("--sizes needs at least one value");
  const auto scenarios = scenarios_from(a.scenarios);
  overload::BenchmarkOptions opts;
  opts.repeats = a.repeats;
  opts.seed = c.seed;
  opts.k_classes = a.classes;
  opts.safety_limit = overload::Seconds(a.safety);

  fs::create_directories(c.out);
  json resolved = overload::io::to_json(cfg);
  resolved["sizes"] = a.sizes;
  resolved["scenarios"] = a.scenarios;
  resolved["repeats"] = a.repeats;
  resolved["classes"] = a.classes;
  resolved["factor"] = a.factor;
  resolved["safety_limit"] = a.safety;
  write_manifest(c, "bench", resolved, argc, argv);

  const auto samples = overload::benchmark(a.sizes, scenarios, cfg, opts);
  {
    std::ofstream os(fs::path(c.out) / "samples.csv");
    overload::io::write_samples_csv(os, samples);
  }

  std::printf("threads=%d\n%-8s", overload::kernels::max_threads(), "n");
  for (auto sc : scenarios) std::printf(" %14s", (std::string(overload::to_string(sc)) + "_ms").c_str());
  std::printf("\n");
  for (std::size_t i = 0; i < a.sizes.size(); ++i) {
    std::printf("%-8zu", a.sizes[i]);
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      std::printf(" %14.4f", samples[i * scenarios.size() + s].elapsed.count() * 1e3);
    }
    std::printf("\n");
  }

  const auto fits = overload::fit_by_scenario(samples, a.factor);
  overload::io::write_json_file(fs::path(c.out) / "fit.json", overload::io::fits_to_json(fits));
  for (const auto& [sc, f] : fits) {
    std::vector<overload::TimingSample> mine;
    for (const auto& s : samples) {
      if (s.scenario == sc) mine.push_back(s);
    }
    std::printf("%-7s alpha=%.4g s  t_base=%.4g ms  N=%zu  r2=%.4f  slope=%.3f\n",
                std::string(overload::to_string(sc)).c_str(), f.params.alpha, f.params.t_base.count() * 1e3,
                f.params.n_break, f.r2, overload::loglog_slope(mine, f.params.n_break));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- attack

struct AttackArgs {
  std::string image;
  std::optional<std::uint64_t> seed_image;
  std::uint64_t model_seed = 1;
  std::vector<std::uint64_t> ensemble;
  std::string ensemble_mode = "average";
  double gain = overload::kDefaultGain;
  std::size_t classes = overload::kDefaultClasses;
  double contrast = overload::kDefaultNoiseContrast;
  double epsilon = 8.0 / 255.0;
  double eta = 2.0 / 255.0;
  std::size_t steps = 100;
  std::size_t grid_m = 8;
  std::string loss = "log";
  std::string step_mode = "sign";
  double t_conf = 0.25;
  bool no_sa = false;
  std::size_t window = 5;
  double decay = 0.5;
  double w_min = 0.05;
};

int run_attack(const Common& c, const AttackArgs& a, const CLI::App* app, int argc, char** argv) {
  overload::AttackConfig cfg;
  overload::io::apply_json(config_section(c, "attack"), cfg);
  if (given(app, "--eps")) cfg.epsilon = a.epsilon;
  if (given(app, "--eta")) cfg.eta = a.eta;
  if (given(app, "--k")) cfg.steps = a.steps;
  if (given(app, "--grid-m")) cfg.grid_m = a.grid_m;
  if (given(app, "--loss")) cfg.loss = overload::parse_loss_kind(a.loss);
  if (given(app, "--step-mode")) cfg.step_mode = overload::parse_step_mode(a.step_mode);
  if (given(app, "--t-conf")) cfg.t_conf = a.t_conf;
  if (given(app, "--no-spatial-attention")) cfg.spatial_attention = !a.no_sa;
  if (given(app, "--stagnation-window")) cfg.stagnation_window = a.window;
  if (given(app, "--stagnation-decay")) cfg.stagnation_decay = a.decay;
  if (given(app, "--w-min")) cfg.w_min = a.w_min;
  cfg.validate();
  const auto mode = overload::parse_ensemble_mode(a.ensemble_mode);

  std::vector<std::uint64_t> seeds = a.ensemble.empty() ? std::vector<std::uint64_t>{a.model_seed} : a.ensemble;
  std::vector<overload::ModelWeights> models;
  for (auto s : seeds) models.push_back(overload::init_weights(s, a.classes, a.gain));

  overload::ImageTensor x;
  json resolved = overload::io::to_json(cfg);
  if (!a.image.empty()) {
    x = overload::io::read_image(a.image);
    resolved["image"] = a.image;
  } else {
    const std::uint64_t s = a.seed_image.value_or(c.seed);
    x = overload::seeded_noise_image(s, 64, 64, a.contrast);
    resolved["seed_image"] = s;
    resolved["contrast"] = a.contrast;
  }
  json mj = json::array();
  for (const auto& m : models) mj.push_back(overload::io::to_json(m));
  resolved["models"] = mj;
  resolved["ensemble_mode"] = a.ensemble_mode;

  fs::create_directories(c.out);
  write_manifest(c, "attack", resolved, argc, argv);

  const auto res = overload::ensemble_attack(models, x, cfg, mode);
  overload::io::write_image(fs::path(c.out) / "adv.ovl", res.adversarial);
  {
    std::ofstream os(fs::path(c.out) / "trace.csv");
    overload::io::write_trace_csv(os, res.trace);
  }
  const std::size_t max_n = overload::forward(models.front(), x).rows();
  json summary{{"clean_count", res.trace.clean_counts.front()},
               {"adv_count", res.trace.final_counts.front()},
               {"clean_counts", res.trace.clean_counts},
               {"adv_counts", res.trace.final_counts},
               {"max_n", max_n},
               {"steps", res.trace.steps.size()}};
  overload::io::write_json_file(fs::path(c.out) / "summary.json", summary);
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::printf("model %llu: clean_count=%zu adv_count=%zu max_n=%zu\n",
                static_cast<unsigned long long>(models[i].seed), res.trace.clean_counts[i], res.trace.final_counts[i],
                max_n);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimArgs {
  std::size_t requests = 1000;
  std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
  double t_infer = 0.020;
  double t_trans = 0.0;
  double timeout = 0.5;
  bool no_timeout = false;
  double alpha = 1e-9;
  double t_base_ms = 1.0;
  std::size_t n_break = 1000;
  std::string fit;
  std::string fit_scenario = "random";
  std::size_t adv = 20000;
  std::size_t clean = 10;
  bool measured = false;
};

int run_simulate(const Common& c, const SimArgs& a, const CLI::App* app, int argc, char** argv) {
  overload::SimConfig cfg;
  overload::io::apply_json(config_section(c, "simulate"), cfg);
  if (given(app, "--t-infer")) cfg.t_infer = a.t_infer;
  if (given(app, "--t-trans")) cfg.t_trans = a.t_trans;
  if (given(app, "--timeout")) cfg.timeout = a.timeout;
  if (given(app, "--no-timeout")) cfg.timeout.reset();
  if (!a.fit.empty()) {
    const json f = overload::io::read_json_file(a.fit);
    const json& entry = f.contains(a.fit_scenario) ? f.at(a.fit_scenario) : f;
    cfg.cost_model = overload::io::cost_model_from_json(entry);
  }
  if (given(app, "--alpha")) cfg.cost_model.alpha = a.alpha;
  if (given(app, "--t-base")) cfg.cost_model.t_base = overload::Seconds(a.t_base_ms * 1e-3);
  if (given(app, "--n-break")) cfg.cost_model.n_break = a.n_break;
  if (given(app, "--adv-candidates")) cfg.adv_candidates = a.adv;
  if (given(app, "--clean-candidates")) cfg.clean_candidates = a.clean;
  if (given(app, "--measured")) cfg.source = overload::NmsTimeSource::measured;
  cfg.measured_seed = c.seed;
  for (double r : a.ratios) {
    overload::SimConfig probe = cfg;
    probe.adversarial_ratio = r;
    probe.validate();
  }

  fs::create_directories(c.out);
  json resolved = overload::io::to_json(cfg);
  resolved.erase("adversarial_ratio");
  resolved["ratios"] = a.ratios;
  resolved["requests"] = a.requests;
  write_manifest(c, "simulate", resolved, argc, argv);

  const auto traces = overload::ratio_sweep(a.requests, a.ratios, cfg, c.seed);
  json summaries = json::array();
  std::printf("%-6s %12s %10s %10s\n", "ratio", "mean_ms", "fps", "timeouts");
  for (const auto& t : traces) {
    summaries.push_back(overload::io::sim_summary(t));
    std::printf("%-6.2f %12.3f %10.3f %10zu\n", t.ratio, t.mean_total * 1e3, t.fps, t.timed_out);
    const std::string name = "sim_" + overload::io::format_number(t.ratio) + ".csv";
    std::ofstream os(fs::path(c.out) / name);
    overload::io::write_sim_csv(os, t);
  }
  overload::io::write_json_file(fs::path(c.out) / "summary.json", summaries);
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out,-o", c.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Seed (default: $OVERLOAD_SEED or 0)");
  sub->add_option("--config", c.config, "JSON config file; flags override its keys");
  sub->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"csv", "json", "table"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"overload: NMS latency lab"};
  app.require_subcommand(1);

  Common common;
  GenArgs gen;
  NmsArgs nms;
  BenchArgs bench;
  AttackArgs attack;
  SimArgs sim;

  auto* g = app.add_subcommand("gen", "Write synthetic candidate sets or a seeded noise image");
  add_common(g, common);
  g->add_option("--scenario", gen.scenarios, "worst, best, random or all")->delimiter(',');
  g->add_option("--n", gen.n, "Candidates per set")->capture_default_str();
  g->add_option("--classes", gen.classes)->capture_default_str();
  g->add_flag("--image", gen.image, "Write a noise image instead");
  g->add_option("--seed-image", gen.seed_image);
  g->add_option("--height", gen.height)->capture_default_str();
  g->add_option("--width", gen.width)->capture_default_str();
  g->add_option("--contrast", gen.contrast)->capture_default_str();

  auto* n = app.add_subcommand("nms", "Run a candidate CSV through NMS");
  add_common(n, common);
  n->add_option("--input,-i", nms.input, "Candidate CSV")->required();
  n->add_option("--tiou", nms.tiou, "IoU threshold(s), comma separated for a sweep")->delimiter(',');
  n->add_option("--t-conf", nms.t_conf);
  n->add_option("--metric", nms.metric)->check(CLI::IsMember({"iou", "giou", "diou", "ciou"}));
  n->add_flag("--class-agnostic", nms.class_agnostic);
  n->add_option("--max-detections", nms.max_detections);
  n->add_option("--max-candidates", nms.max_candidates, "Candidate cap (0 = none)");
  n->add_option("--timeout", nms.timeout, "Seconds (0 = none)");
  n->add_option("--kernel", nms.kernel, "matrix or greedy")->capture_default_str();
  n->add_option("--backend", nms.backend, "omp or serial");

  auto* b = app.add_subcommand("bench", "Time nms_matrix on synthetic sets and fit the cost model");
  add_common(b, common);
  b->add_option("--sizes", bench.sizes)->delimiter(',');
  b->add_option("--scenario", bench.scenarios)->delimiter(',');
  b->add_option("--repeats", bench.repeats)->capture_default_str();
  b->add_option("--classes", bench.classes)->capture_default_str();
  b->add_option("--factor", bench.factor, "Plateau exceedance factor")->capture_default_str();
  b->add_option("--safety-limit", bench.safety, "Seconds per run")->capture_default_str();
  b->add_option("--backend", bench.backend);

  auto* a = app.add_subcommand("attack", "Run the overload attack");
  add_common(a, common);
  a->add_option("--image", attack.image, "OVL1 input image");
  a->add_option("--seed-image", attack.seed_image, "Seed for a 64x64 noise image");
  a->add_option("--model-seed", attack.model_seed)->capture_default_str();
  a->add_option("--ensemble", attack.ensemble, "Model seeds")->delimiter(',');
  a->add_option("--ensemble-mode", attack.ensemble_mode)->capture_default_str();
  a->add_option("--gain", attack.gain)->capture_default_str();
  a->add_option("--classes", attack.classes)->capture_default_str();
  a->add_option("--contrast", attack.contrast)->capture_default_str();
  a->add_option("--eps,--epsilon", attack.epsilon);
  a->add_option("--eta", attack.eta);
  a->add_option("--k,--steps", attack.steps);
  a->add_option("--grid-m", attack.grid_m);
  a->add_option("--loss", attack.loss);
  a->add_option("--step-mode", attack.step_mode);
  a->add_option("--t-conf", attack.t_conf);
  a->add_flag("--no-spatial-attention", attack.no_sa);
  a->add_option("--stagnation-window", attack.window);
  a->add_option("--stagnation-decay", attack.decay);
  a->add_option("--w-min", attack.w_min);

  auto* s = app.add_subcommand("simulate", "Pipeline simulation over adversarial ratios");
  add_common(s, common);
  s->add_option("--requests", sim.requests)->capture_default_str();
  s->add_option("--ratio", sim.ratios)->delimiter(',');
  s->add_option("--t-infer", sim.t_infer, "Seconds");
  s->add_option("--t-trans", sim.t_trans, "Seconds");
  s->add_option("--timeout", sim.timeout, "Seconds");
  s->add_flag("--no-timeout", sim.no_timeout);
  s->add_option("--alpha", sim.alpha, "Seconds per candidate^2");
  s->add_option("--t-base", sim.t_base_ms, "Milliseconds");
  s->add_option("--n-break", sim.n_break);
  s->add_option("--fit", sim.fit, "fit.json from bench");
  s->add_option("--fit-scenario", sim.fit_scenario)->capture_default_str();
  s->add_option("--adv-candidates", sim.adv);
  s->add_option("--clean-candidates", sim.clean);
  s->add_flag("--measured", sim.measured, "Time NMS live instead of using the cost model");

  try {
    common.seed = default_seed();
    app.parse(argc, argv);
    if (g->parsed()) return run_gen(common, gen, argc, argv);
    if (n->parsed()) return run_nms(common, nms, n, argc, argv);
    if (b->parsed()) return run_bench(common, bench, b, argc, argv);
    if (a->parsed()) return run_attack(common, attack, a, argc, argv);
    if (s->parsed()) return run_simulate(common, sim, s, argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const overload::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const overload::FitDegenerateError& e) {
    std::cerr << "fit degenerate: " << e.what() << '\n';
    return kExitFit;
  } catch (const overload::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const overload::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}
