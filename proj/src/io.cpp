#include "overload/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "overload/errors.hpp"

namespace overload::io {

namespace {

template <typename T>
std::string shortest(T v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw DataError("number formatting failed");
  return std::string(buf.data(), end);
}

template <typename T>
T parse_number(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("line " + std::to_string(line) + ": cannot parse '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  return is;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated tensor header");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

template <typename T, typename F>
void take(const json& j, const char* key, F&& set) {
  try {
    set(j.at(key).get<T>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string("unknown ") + what + " config key '" + key + "'");
  }
}

}  // namespace

std::string format_number(double v) { return shortest(v); }
std::string format_number(float v) { return shortest(v); }

void write_candidates_csv(std::ostream& os, const CandidateSet& set) {
  const std::size_t k = set.empty() ? 0 : set.candidates.front().class_probs.size();
  os << "x1,y1,x2,y2,objectness";
  for (std::size_t i = 0; i < k; ++i) os << ",p_" << i;
  os << '\n';
  for (const auto& c : set.candidates) {
    if (c.class_probs.size() != k) throw DataError("candidates disagree on the number of classes");
    os << shortest(c.box.x1) << ',' << shortest(c.box.y1) << ',' << shortest(c.box.x2) << ',' << shortest(c.box.y2)
       << ',' << shortest(c.objectness);
    for (float p : c.class_probs) os << ',' << shortest(p);
    os << '\n';
  }
}

void write_candidates_csv(const fs::path& path, const CandidateSet& set) {
  auto os = open_out(path);
  write_candidates_csv(os, set);
}

CandidateSet read_candidates_csv(std::istream& is, std::string image_id) {
  CandidateSet set;
  set.image_id = std::move(image_id);
  std::string line;
  std::size_t lineno = 0;
  std::size_t k = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view row = trim_cr(line);
    if (row.empty()) continue;
    const auto fields = split(row, ',');
    if (!have_header) {
      static constexpr std::array<std::string_view, 5> kFixed{"x1", "y1", "x2", "y2", "objectness"};
      if (fields.size() < 6) throw DataError("candidate CSV header needs box, objectness and at least one p_ column");
      for (std::size_t i = 0; i < 5; ++i) {
        if (fields[i] != kFixed[i]) throw DataError("unexpected candidate CSV header column '" + std::string(fields[i]) + "'");
      }
      for (std::size_t i = 5; i < fields.size(); ++i) {
        if (fields[i] != "p_" + std::to_string(i - 5)) {
          throw DataError("unexpected candidate CSV header column '" + std::string(fields[i]) + "'");
        }
      }
      k = fields.size() - 5;
      have_header = true;
      continue;
    }
    if (fields.size() != 5 + k) {
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(5 + k) + " fields");
    }
    std::array<float, 5> head{};
    for (std::size_t i = 0; i < 5; ++i) head[i] = parse_number<float>(fields[i], lineno);
    std::vector<float> probs(k);
    for (std::size_t i = 0; i < k; ++i) probs[i] = parse_number<float>(fields[5 + i], lineno);
    try {
      set.candidates.push_back(make_candidate(Box(head[0], head[1], head[2], head[3]), head[4], std::move(probs)));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return set;
}

CandidateSet read_candidates_csv(const fs::path& path) {
  auto is = open_in(path);
  return read_candidates_csv(is, path.stem().string());
}

void write_image(std::ostream& os, const ImageTensor& img) {
  if (img.data.size() != img.height * img.width * img.channels) throw ShapeError("image buffer size mismatch");
  os.write("OVL1", 4);
  put_u32(os, 3);
  put_u32(os, static_cast<std::uint32_t>(img.height));
  put_u32(os, static_cast<std::uint32_t>(img.width));
  put_u32(os, static_cast<std::uint32_t>(img.channels));
  for (double v : img.data) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
  if (!os) throw DataError("failed writing tensor");
}

void write_image(const fs::path& path, const ImageTensor& img) {
  auto os = open_out(path, std::ios::out | std::ios::binary);
  write_image(os, img);
}

ImageTensor read_image(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "OVL1", 4) != 0) throw DataError("not an OVL1 tensor");
  const std::uint32_t rank = get_u32(is);
  if (rank != 3) throw DataError("OVL1 rank must be 3, got " + std::to_string(rank));
  const std::uint32_t h = get_u32(is);
  const std::uint32_t w = get_u32(is);
  const std::uint32_t c = get_u32(is);
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * c;
  if (count > (std::uint64_t{1} << 30)) throw DataError("OVL1 tensor too large");
  ImageTensor img(h, w, c);
  for (double& v : img.data) {
    std::uint32_t bits = 0;
    try {
      bits = get_u32(is);
    } catch (const DataError&) {
      throw DataError("truncated OVL1 payload");
    }
    float f = 0.0f;
    std::memcpy(&f, &bits, 4);
    if (!(f >= 0.0f && f <= 1.0f)) throw DataError("OVL1 pixel outside [0, 1]");
    v = static_cast<double>(f);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after OVL1 payload");
  return img;
}

ImageTensor read_image(const fs::path& path) {
  auto is = open_in(path, std::ios::in | std::ios::binary);
  return read_image(is);
}

json to_json(const BoxCandidate& c) {
  return json{{"box", {c.box.x1, c.box.y1, c.box.x2, c.box.y2}},
              {"objectness", c.objectness},
              {"class_probs", c.class_probs},
              {"class_id", c.class_id},
              {"confidence", c.confidence()}};
}

json to_json(const NmsReport& r) {
  json kept = json::array();
  for (const auto& c : r.kept) kept.push_back(to_json(c));
  return json{{"kept", std::move(kept)},
              {"kept_count", r.kept.size()},
              {"n_input", r.n_input},
              {"n_pairwise", r.n_pairwise},
              {"elapsed_us", r.elapsed.count() * 1e6},
              {"timed_out", r.timed_out},
              {"capped", r.capped}};
}

json to_json(const NmsConfig& c) {
  return json{{"t_conf", c.t_conf},
              {"t_iou", c.t_iou},
              {"metric", std::string(to_string(c.metric))},
              {"class_aware", c.class_aware},
              {"max_detections", c.max_detections},
              {"max_candidates", c.max_candidates ? json(*c.max_candidates) : json(nullptr)},
              {"timeout", c.timeout ? json(c.timeout->count()) : json(nullptr)},
              {"backend", c.backend == KernelBackend::omp ? "omp" : "serial"}};
}

json to_json(const AttackConfig& c) {
  return json{{"epsilon", c.epsilon},
              {"eta", c.eta},
              {"steps", c.steps},
              {"grid_m", c.grid_m},
              {"loss", std::string(to_string(c.loss))},
              {"step_mode", std::string(to_string(c.step_mode))},
              {"t_conf", c.t_conf},
              {"spatial_attention", c.spatial_attention},
              {"stagnation_window", c.stagnation_window},
              {"stagnation_decay", c.stagnation_decay},
              {"w_min", c.w_min}};
}

json to_json(const CostModelParams& p) {
  return json{{"alpha", p.alpha}, {"t_base_us", p.t_base.count() * 1e6}, {"n_break", p.n_break}};
}

json to_json(const FitResult& f) {
  json j = to_json(f.params);
  j["r2"] = f.r2;
  return j;
}

json to_json(const SimConfig& c) {
  return json{{"t_infer", c.t_infer},
              {"t_trans", c.t_trans},
              {"cost_model", to_json(c.cost_model)},
              {"source", c.source == NmsTimeSource::measured ? "measured" : "cost_model"},
              {"timeout", c.timeout ? json(*c.timeout) : json(nullptr)},
              {"adversarial_ratio", c.adversarial_ratio},
              {"adv_candidates", c.adv_candidates},
              {"clean_candidates", c.clean_candidates},
              {"closed_loop", c.closed_loop},
              {"measured_seed", c.measured_seed}};
}

json to_json(const ModelWeights& w) {
  return json{{"arch", kArchTag}, {"seed", w.seed}, {"classes", w.classes}, {"gain", w.gain}};
}

void apply_json(const json& j, NmsConfig& cfg) {
  reject_unknown(j, {"t_conf", "t_iou", "metric", "class_aware", "max_detections", "max_candidates", "timeout", "backend"},
                 "nms");
  if (j.contains("t_conf")) take<float>(j, "t_conf", [&](float v) { cfg.t_conf = v; });
  if (j.contains("t_iou")) take<float>(j, "t_iou", [&](float v) { cfg.t_iou = v; });
  if (j.contains("metric")) take<std::string>(j, "metric", [&](const std::string& v) { cfg.metric = parse_overlap_metric(v); });
  if (j.contains("class_aware")) take<bool>(j, "class_aware", [&](bool v) { cfg.class_aware = v; });
  if (j.contains("max_detections")) take<std::size_t>(j, "max_detections", [&](std::size_t v) { cfg.max_detections = v; });
  if (j.contains("max_candidates")) {
    if (j.at("max_candidates").is_null()) {
      cfg.max_candidates.reset();
    } else {
      take<std::size_t>(j, "max_candidates", [&](std::size_t v) { cfg.max_candidates = v; });
    }
  }
  if (j.contains("timeout")) {
    if (j.at("timeout").is_null()) {
      cfg.timeout.reset();
    } else {
      take<double>(j, "timeout", [&](double v) { cfg.timeout = Seconds(v); });
    }
  }
  if (j.contains("backend")) {
    take<std::string>(j, "backend", [&](const std::string& v) {
      if (v == "omp") {
        cfg.backend = KernelBackend::omp;
      } else if (v == "serial") {
        cfg.backend = KernelBackend::serial;
      } else {
        throw ConfigError("unknown backend '" + v + "'");
      }
    });
  }
}

void apply_json(const json& j, AttackConfig& cfg) {
  reject_unknown(j,
                 {"epsilon", "eta", "steps", "grid_m", "loss", "step_mode", "t_conf", "spatial_attention",
                  "stagnation_window", "stagnation_decay", "w_min"},
                 "attack");
  if (j.contains("epsilon")) take<double>(j, "epsilon", [&](double v) { cfg.epsilon = v; });
  if (j.contains("eta")) take<double>(j, "eta", [&](double v) { cfg.eta = v; });
  if (j.contains("steps")) take<std::size_t>(j, "steps", [&](std::size_t v) { cfg.steps = v; });
  if (j.contains("grid_m")) take<std::size_t>(j, "grid_m", [&](std::size_t v) { cfg.grid_m = v; });
  if (j.contains("loss")) take<std::string>(j, "loss", [&](const std::string& v) { cfg.loss = parse_loss_kind(v); });
  if (j.contains("step_mode")) {
    take<std::string>(j, "step_mode", [&](const std::string& v) { cfg.step_mode = parse_step_mode(v); });
  }
  if (j.contains("t_conf")) take<double>(j, "t_conf", [&](double v) { cfg.t_conf = v; });
  if (j.contains("spatial_attention")) take<bool>(j, "spatial_attention", [&](bool v) { cfg.spatial_attention = v; });
  if (j.contains("stagnation_window")) {
    take<std::size_t>(j, "stagnation_window", [&](std::size_t v) { cfg.stagnation_window = v; });
  }
  if (j.contains("stagnation_decay")) take<double>(j, "stagnation_decay", [&](double v) { cfg.stagnation_decay = v; });
  if (j.contains("w_min")) take<double>(j, "w_min", [&](double v) { cfg.w_min = v; });
}

CostModelParams cost_model_from_json(const json& j) {
  reject_unknown(j, {"alpha", "t_base_us", "n_break", "r2"}, "cost model");
  CostModelParams p;
  take<double>(j, "alpha", [&](double v) { p.alpha = v; });
  take<double>(j, "t_base_us", [&](double v) { p.t_base = Seconds(v * 1e-6); });
  take<std::size_t>(j, "n_break", [&](std::size_t v) { p.n_break = v; });
  return p;
}

void apply_json(const json& j, SimConfig& cfg) {
  reject_unknown(j,
                 {"t_infer", "t_trans", "cost_model", "source", "timeout", "adversarial_ratio", "adv_candidates",
                  "clean_candidates", "closed_loop", "measured_seed"},
                 "simulate");
  if (j.contains("t_infer")) take<double>(j, "t_infer", [&](double v) { cfg.t_infer = v; });
  if (j.contains("t_trans")) take<double>(j, "t_trans", [&](double v) { cfg.t_trans = v; });
  if (j.contains("cost_model")) cfg.cost_model = cost_model_from_json(j.at("cost_model"));
  if (j.contains("source")) {
    take<std::string>(j, "source", [&](const std::string& v) {
      if (v == "cost_model") {
        cfg.source = NmsTimeSource::cost_model;
      } else if (v == "measured") {
        cfg.source = NmsTimeSource::measured;
      } else {
        throw ConfigError("unknown NMS time source '" + v + "'");
      }
    });
  }
  if (j.contains("timeout")) {
    if (j.at("timeout").is_null()) {
      cfg.timeout.reset();
    } else {
      take<double>(j, "timeout", [&](double v) { cfg.timeout = v; });
    }
  }
  if (j.contains("adversarial_ratio")) take<double>(j, "adversarial_ratio", [&](double v) { cfg.adversarial_ratio = v; });
  if (j.contains("adv_candidates")) take<std::size_t>(j, "adv_candidates", [&](std::size_t v) { cfg.adv_candidates = v; });
  if (j.contains("clean_candidates")) {
    take<std::size_t>(j, "clean_candidates", [&](std::size_t v) { cfg.clean_candidates = v; });
  }
  if (j.contains("closed_loop")) take<bool>(j, "closed_loop", [&](bool v) { cfg.closed_loop = v; });
  if (j.contains("measured_seed")) take<std::uint64_t>(j, "measured_seed", [&](std::uint64_t v) { cfg.measured_seed = v; });
}

ModelWeights weights_from_json(const json& j) {
  try {
    if (j.at("arch").get<std::string>() != kArchTag) throw DataError("unsupported detector arch");
    return init_weights(j.at("seed").get<std::uint64_t>(), j.value("classes", kDefaultClasses),
                        j.value("gain", kDefaultGain));
  } catch (const json::exception& e) {
    throw DataError(std::string("bad weights record: ") + e.what());
  }
}

void write_samples_csv(std::ostream& os, std::span<const TimingSample> samples) {
  os << "n,scenario,elapsed_us,repeats\n";
  for (const auto& s : samples) {
    os << s.n << ',' << to_string(s.scenario) << ',' << shortest(s.elapsed.count() * 1e6) << ',' << s.repeats << '\n';
  }
}

std::vector<TimingSample> read_samples_csv(std::istream& is) {
  std::vector<TimingSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view row = trim_cr(line);
    if (row.empty()) continue;
    if (lineno == 1) {
      if (row != "n,scenario,elapsed_us,repeats") throw DataError("unexpected samples CSV header");
      continue;
    }
    const auto f = split(row, ',');
    if (f.size() != 4) throw DataError("line " + std::to_string(lineno) + ": expected 4 fields");
    TimingSample s;
    s.n = parse_number<std::size_t>(f[0], lineno);
    try {
      s.scenario = parse_scenario(f[1]);
    } catch (const ConfigError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    s.elapsed = Seconds(parse_number<double>(f[2], lineno) * 1e-6);
    s.repeats = parse_number<std::size_t>(f[3], lineno);
    out.push_back(s);
  }
  return out;
}

json fits_to_json(const std::map<Scenario, FitResult>& fits) {
  json j = json::object();
  for (const auto& [sc, f] : fits) j[std::string(to_string(sc))] = to_json(f);
  return j;
}

void write_trace_csv(std::ostream& os, const AttackTrace& trace) {
  os << "step,loss,count,linf,min_pixel,max_pixel,cell_counts\n";
  for (const auto& r : trace.steps) {
    os << r.step << ',' << shortest(r.loss) << ',' << r.count << ',' << shortest(r.linf) << ','
       << shortest(r.min_pixel) << ',' << shortest(r.max_pixel) << ',';
    for (std::size_t i = 0; i < r.cell_counts.size(); ++i) os << (i ? ";" : "") << r.cell_counts[i];
    os << '\n';
  }
}

void write_sim_csv(std::ostream& os, const SimTrace& trace) {
  os << "id,arrival,t_wait,t_comp,t_total,timed_out\n";
  for (const auto& r : trace.records) {
    os << r.id << ',' << shortest(r.arrival) << ',' << shortest(r.t_wait) << ',' << shortest(r.t_comp) << ','
       << shortest(r.t_total) << ',' << (r.timed_out ? 1 : 0) << '\n';
  }
}

json sim_summary(const SimTrace& trace) {
  return json{{"mean_ms", trace.mean_total * 1e3}, {"fps", trace.fps}, {"ratio", trace.ratio}};
}

json read_json_file(const fs::path& path) {
  auto is = open_in(path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

void write_text_file(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
}

}  // namespace overload::io
