#include "avgeo/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "avgeo/errors.hpp"

namespace avgeo::io {
namespace {

void expect_format(const json& j, const char* format) {
  if (!j.is_object() || j.value("format", "") != format)
    throw InvalidInput(std::string("expected a '") + format + "' container");
  if (j.value("version", 0) != kFormatVersion)
    throw InvalidInput(std::string("unsupported '") + format + "' version");
}

std::string activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "identity"; }

Activation activation_from(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "identity") return Activation::Identity;
  throw InvalidInput("unknown activation '" + s + "'");
}

json matrix_row_major(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

MatrixXd matrix_from_row_major(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
    throw InvalidInput("matrix payload has the wrong number of entries");
  MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[k++].get<double>();
  return m;
}

} // namespace

json to_json(const Provenance& p) {
  return {{"tool", p.tool}, {"version", p.version}, {"config_hash", p.config_hash}, {"seed", p.seed}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.tool = j.value("tool", "avgeo");
  p.version = j.value("version", "");
  p.config_hash = j.value("config_hash", "");
  p.seed = j.value("seed", std::uint64_t{0});
  return p;
}

json vector_to_json(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw InvalidInput("expected a number array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidInput("expected a number array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json geopoint_to_json(const GeoPoint& p) { return json::array({p.lat, p.lon}); }

GeoPoint geopoint_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw InvalidInput("coordinates must be [lat, lon]");
  return GeoPoint::make(j[0].get<double>(), j[1].get<double>());
}

json to_json(const DenseNet& net) {
  json layers = json::array();
  for (const auto& L : net.layers())
    layers.push_back({{"activation", activation_name(L.activation)},
                      {"rows", L.weight.rows()},
                      {"cols", L.weight.cols()},
                      {"weight", matrix_row_major(L.weight)},
                      {"bias", vector_to_json(L.bias)}});
  return {{"layers", layers}};
}

DenseNet dense_net_from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& L : j.at("layers")) {
    DenseLayer layer;
    const auto rows = L.at("rows").get<Eigen::Index>();
    const auto cols = L.at("cols").get<Eigen::Index>();
    layer.weight = matrix_from_row_major(L.at("weight"), rows, cols);
    layer.bias = vector_from_json(L.at("bias"));
    layer.activation = activation_from(L.at("activation").get<std::string>());
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

json to_json(const Dictionary& dict, const Provenance& prov) {
  json class_of = json::array();
  for (int j = 0; j < dict.num_kernels(); ++j) class_of.push_back(dict.class_of(j));
  return {{"format", "avgeo.dictionary"},
          {"version", kFormatVersion},
          {"meta", to_json(prov)},
          {"dim", dict.dim()},
          {"num_kernels", dict.num_kernels()},
          {"num_classes", dict.num_classes()},
          {"block_size", dict.block_size()},
          {"class_of", class_of},
          {"kernels", matrix_row_major(dict.kernels())}};
}

Dictionary dictionary_from_json(const json& j) {
  expect_format(j, "avgeo.dictionary");
  try {
    const int dim = j.at("dim").get<int>();
    const int n = j.at("num_kernels").get<int>();
    const int classes = j.at("num_classes").get<int>();
    Dictionary dict(matrix_from_row_major(j.at("kernels"), dim, n), classes);
    if (j.at("block_size").get<int>() != dict.block_size()) throw InvalidInput("dictionary block size is inconsistent");
    const auto& class_of = j.at("class_of");
    if (static_cast<int>(class_of.size()) != n) throw InvalidInput("dictionary class map has the wrong length");
    for (int k = 0; k < n; ++k)
      if (class_of[static_cast<std::size_t>(k)].get<int>() != dict.class_of(k))
        throw InvalidInput("dictionary class map is not block-contiguous");
    return dict;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed dictionary container: ") + e.what());
  }
}

json to_json(const FlowCheckpoint& ckpt) {
  const auto& m = ckpt.model;
  json out = {{"format", "avgeo.flow"},
              {"version", kFormatVersion},
              {"meta", to_json(ckpt.provenance)},
              {"psi_dim", m.psi_dim()},
              {"time_frequencies", m.time_embedding().num_frequencies},
              {"integration",
               {{"scheme", "heun"},
                {"sample_steps", m.defaults().sample_steps},
                {"likelihood_steps", m.defaults().likelihood_steps},
                {"divergence_eps", m.defaults().divergence_eps}}},
              {"net", to_json(m.net())}};
  if (ckpt.fusion) {
    const auto& f = *ckpt.fusion;
    out["fusion"] = {{"visual_dim", f.visual_dim()},
                     {"num_atoms", f.num_atoms()},
                     {"psi_dim", f.psi_dim()},
                     {"weight", matrix_row_major(f.weight())},
                     {"bias", vector_to_json(f.bias())}};
  }
  return out;
}

FlowCheckpoint flow_from_json(const json& j) {
  expect_format(j, "avgeo.flow");
  try {
    FlowCheckpoint ck;
    IntegrationDefaults d;
    const auto& integ = j.at("integration");
    d.sample_steps = integ.at("sample_steps").get<int>();
    d.likelihood_steps = integ.at("likelihood_steps").get<int>();
    d.divergence_eps = integ.at("divergence_eps").get<double>();
    TimeEmbedding time{j.at("time_frequencies").get<int>()};
    ck.model = FlowModel(dense_net_from_json(j.at("net")), j.at("psi_dim").get<int>(), time, d);
    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      const int vd = f.at("visual_dim").get<int>();
      const int na = f.at("num_atoms").get<int>();
      const int pd = f.at("psi_dim").get<int>();
      ck.fusion = FusionProjection(matrix_from_row_major(f.at("weight"), pd, vd + na), vector_from_json(f.at("bias")), vd);
    }
    if (j.contains("meta")) ck.provenance = provenance_from_json(j["meta"]);
    return ck;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed flow container: ") + e.what());
  }
}

json to_json(const ClipEmbedding& clip) { return {{"class_id", clip.class_id}, {"vec", vector_to_json(clip.vec)}}; }

ClipEmbedding clip_from_json(const json& j) {
  ClipEmbedding c;
  c.class_id = j.at("class_id").get<int>();
  c.vec = vector_from_json(j.at("vec"));
  if (!c.vec.allFinite()) throw InvalidInput("clip embedding is not finite");
  return c;
}

json to_json(const MixtureSample& m) {
  json classes = json::array();
  json gains = json::array();
  json clips = json::array();
  for (const auto& c : m.components) {
    classes.push_back(c.class_id);
    gains.push_back(c.gain);
    clips.push_back(vector_to_json(c.clip));
  }
  return {{"classes", classes}, {"gains", gains}, {"clips", clips}, {"x_mix", vector_to_json(m.x_mix)}};
}

MixtureSample mixture_from_json(const json& j) {
  try {
    const auto& classes = j.at("classes");
    const auto& gains = j.at("gains");
    const auto& clips = j.at("clips");
    if (classes.size() != gains.size() || classes.size() != clips.size())
      throw InvalidInput("mixture record fields have different lengths");
    std::vector<MixtureComponent> comps;
    for (std::size_t k = 0; k < classes.size(); ++k)
      comps.push_back({classes[k].get<int>(), vector_from_json(clips[k]), gains[k].get<double>()});
    MixtureSample m = mix_components(std::move(comps));
    // Keep the stored mixture so externally encoded embeddings survive a round trip.
    if (j.contains("x_mix")) {
      VectorXd x = vector_from_json(j["x_mix"]);
      if (x.size() != m.x_mix.size()) throw InvalidInput("x_mix dimension does not match the clips");
      m.x_mix = std::move(x);
    }
    return m;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed mixture record: ") + e.what());
  }
}

json to_json(const EvalRecord& r) {
  json out = {{"pred", geopoint_to_json(r.prediction)}, {"truth", geopoint_to_json(r.truth)}};
  if (r.log_likelihood) out["log_likelihood"] = *r.log_likelihood;
  if (!r.samples.empty()) {
    json s = json::array();
    for (const auto& p : r.samples) s.push_back(geopoint_to_json(p));
    out["samples"] = s;
  }
  return out;
}

EvalRecord eval_record_from_json(const json& j) {
  try {
    EvalRecord r;
    r.prediction = geopoint_from_json(j.at("pred"));
    r.truth = geopoint_from_json(j.at("truth"));
    if (j.contains("log_likelihood") && !j["log_likelihood"].is_null())
      r.log_likelihood = j["log_likelihood"].get<double>();
    if (j.contains("samples"))
      for (const auto& s : j["samples"]) r.samples.push_back(geopoint_from_json(s));
    return r;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed evaluation record: ") + e.what());
  }
}

json to_json(const MetricReport& rep) {
  json acc = json::object();
  for (const auto& a : rep.accuracy) {
    acc[format_double(a.threshold_km) + "km"] = a.accuracy;
  }
  json out = {{"num_records", rep.num_records}, {"accuracy", acc}, {"median_error_km", rep.median_error_km}};
  out["mean_nll"] = rep.mean_nll ? json(*rep.mean_nll) : json(nullptr);
  out["knn_k"] = rep.prd_k;
  if (rep.prd) {
    out["precision"] = rep.prd->precision;
    out["recall"] = rep.prd->recall;
    out["density"] = rep.prd->density;
    out["coverage"] = rep.prd->coverage;
  } else {
    out["precision"] = out["recall"] = out["density"] = out["coverage"] = nullptr;
  }
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string report_csv(const MetricReport& rep) {
  std::ostringstream head;
  std::ostringstream row;
  head << "num_records";
  row << rep.num_records;
  for (const auto& a : rep.accuracy) {
    head << ",acc_" << format_double(a.threshold_km) << "km";
    row << ',' << format_double(a.accuracy);
  }
  head << ",median_error_km,mean_nll,precision,recall,density,coverage\n";
  row << ',' << format_double(rep.median_error_km) << ',';
  if (rep.mean_nll) row << format_double(*rep.mean_nll);
  if (rep.prd)
    row << ',' << format_double(rep.prd->precision) << ',' << format_double(rep.prd->recall) << ','
        << format_double(rep.prd->density) << ',' << format_double(rep.prd->coverage);
  else
    row << ",,,,";
  row << '\n';
  return head.str() + row.str();
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in '" + path + "': " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw InvalidInput(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::string text;
  for (const auto& r : records) text += r.dump() + "\n";
  write_text(path, text);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

void write_sidecar(const std::string& path, const Provenance& prov) { write_json(path + ".meta.json", to_json(prov)); }

} // namespace avgeo::io
