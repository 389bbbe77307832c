#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "overload/attack.hpp"
#include "overload/costmodel.hpp"
#include "overload/detector.hpp"
#include "overload/nms.hpp"
#include "overload/pipeline_sim.hpp"

namespace overload::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// Shortest decimal form that parses back to the same value.
std::string format_number(double v);
std::string format_number(float v);

// Candidate sets: header x1,y1,x2,y2,objectness,p_0,...,p_{K-1}, one row per candidate.
void write_candidates_csv(std::ostream& os, const CandidateSet& set);
void write_candidates_csv(const fs::path& path, const CandidateSet& set);
/// An empty file or a header with no rows gives an empty set. Throws DataError.
CandidateSet read_candidates_csv(std::istream& is, std::string image_id = {});
CandidateSet read_candidates_csv(const fs::path& path);

// OVL1 tensors: "OVL1", u32 rank = 3, u32 H, W, C, then float32 values, all little endian.
void write_image(std::ostream& os, const ImageTensor& img);
void write_image(const fs::path& path, const ImageTensor& img);
/// Throws DataError on a bad magic, rank, truncated payload or value outside [0, 1].
ImageTensor read_image(std::istream& is);
ImageTensor read_image(const fs::path& path);

json to_json(const BoxCandidate& c);
json to_json(const NmsReport& r);
json to_json(const NmsConfig& c);
json to_json(const AttackConfig& c);
json to_json(const SimConfig& c);
json to_json(const CostModelParams& p);
json to_json(const FitResult& f);
json to_json(const ModelWeights& w);

/// Keys are the field names; keys that are absent keep the value already in `cfg`.
/// Unknown keys and wrongly typed values throw ConfigError.
void apply_json(const json& j, NmsConfig& cfg);
void apply_json(const json& j, AttackConfig& cfg);
void apply_json(const json& j, SimConfig& cfg);
CostModelParams cost_model_from_json(const json& j);
/// Rebuilds weights from {arch, seed, classes, gain}. Throws DataError on another arch.
ModelWeights weights_from_json(const json& j);

void write_samples_csv(std::ostream& os, std::span<const TimingSample> samples);
std::vector<TimingSample> read_samples_csv(std::istream& is);
json fits_to_json(const std::map<Scenario, FitResult>& fits);

void write_trace_csv(std::ostream& os, const AttackTrace& trace);
void write_sim_csv(std::ostream& os, const SimTrace& trace);
json sim_summary(const SimTrace& trace);

json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const json& j);
void write_text_file(const fs::path& path, const std::string& text);

}  // namespace overload::io
