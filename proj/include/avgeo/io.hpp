#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avgeo/atoms.hpp"
#include "avgeo/eval.hpp"
#include "avgeo/net.hpp"
#include "avgeo/rfm.hpp"

namespace avgeo::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Who produced a file: embedded as "meta" in JSON containers, written as a
/// `<path>.meta.json` sidecar next to JSONL and CSV outputs.
struct Provenance {
  std::string tool = "avgeo";
  std::string version;
  std::string config_hash;
  std::uint64_t seed = 0;
};

json to_json(const Provenance& p);
Provenance provenance_from_json(const json& j);

json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const json& j);

/// Coordinates are always [lat, lon] in degrees.
json geopoint_to_json(const GeoPoint& p);
GeoPoint geopoint_from_json(const json& j);

json to_json(const DenseNet& net);
DenseNet dense_net_from_json(const json& j);

/// Dictionary container: dims, class map, row-major kernels and provenance.
json to_json(const Dictionary& dict, const Provenance& prov);
Dictionary dictionary_from_json(const json& j);

struct FlowCheckpoint {
  FlowModel model;
  std::optional<FusionProjection> fusion;
  Provenance provenance;
};

json to_json(const FlowCheckpoint& ckpt);
FlowCheckpoint flow_from_json(const json& j);

/// {"class_id", "vec"}
json to_json(const ClipEmbedding& clip);
ClipEmbedding clip_from_json(const json& j);

/// {"classes", "gains", "clips", "x_mix"}
json to_json(const MixtureSample& m);
MixtureSample mixture_from_json(const json& j);

/// {"pred", "truth", optional "log_likelihood", optional "samples"}
json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const json& j);

json to_json(const MetricReport& rep);
/// Header line and one data row.
std::string report_csv(const MetricReport& rep);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

json read_json(const std::string& path);
void write_json(const std::string& path, const json& j);
std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& records);
void write_text(const std::string& path, const std::string& text);
void write_sidecar(const std::string& path, const Provenance& prov);

} // namespace avgeo::io
