// avgeo: synthetic data, training, sampling, rewards and metrics from the command line.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "avgeo/atoms.hpp"
#include "avgeo/errors.hpp"
#include "avgeo/eval.hpp"
#include "avgeo/io.hpp"
#include "avgeo/rewards.hpp"
#include "avgeo/rfm.hpp"
#include "run_config.hpp"

#ifndef AVGEO_VERSION
#define AVGEO_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace avgeo;
using avgeo::io::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

const char* const kFiles = "Files";

struct Context {
  io::Provenance prov;
  std::uint64_t seed = 7;
  std::uint64_t stream = 0;

  /// Subcommands sharing a seed still draw independent streams.
  Rng rng() const {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(stream >> 32)};
    return Rng(seq);
  }
};

void log(const std::string& msg) { std::cerr << "[avgeo] " << msg << "\n"; }

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidInput(std::string("missing required path: ") + what);
  if (!fs::exists(path)) throw InvalidInput(std::string(what) + " '" + path + "' does not exist");
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_jsonl_with_meta(const std::string& path, const std::vector<json>& records, const Context& ctx) {
  io::write_jsonl(path, records);
  io::write_sidecar(path, ctx.prov);
}

void write_curve(const std::string& path, const std::vector<double>& curve, const Context& ctx) {
  std::ostringstream os;
  os << "batch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) os << i << ',' << io::format_double(curve[i]) << '\n';
  io::write_text(path, os.str());
  io::write_sidecar(path, ctx.prov);
}

UnitVec tangent_gaussian(const UnitVec& centre, double sigma, Rng& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  const auto e = tangent_basis(centre);
  return exp_map(centre, g(rng) * e[0] + g(rng) * e[1]);
}

// ---------------------------------------------------------------- factory

struct FactoryOpts {
  std::string out_dir = "data_out";
  int classes = 16;
  int dim = 64;
  int clips_per_class = 50;
  int k = 3;
  int train = 2000;
  int test = 200;
  double noise = 0.3;
  double gain_lo = 0.2;
  double gain_hi = 1.0;
  int visual_dim = 16;
  int visual_groups = 4;
  int frames = 4;
  double spread_km = 300.0;
};

// A synthetic scene: the loudest sound class decides where it was recorded,
// and the visual frames only identify a coarse group of classes.
json scene_record(int id, const MixtureSample& m, const std::vector<UnitVec>& homes,
                  const std::vector<VectorXd>& visual, const FactoryOpts& o, Rng& rng) {
  json rec = io::to_json(m);
  rec["id"] = id;
  const int dominant = m.components.front().class_id;
  const double sigma = o.spread_km / kEarthRadiusKm / std::sqrt(2.0);
  const UnitVec where = tangent_gaussian(homes[static_cast<std::size_t>(dominant)], sigma, rng);
  rec["location"] = io::geopoint_to_json(from_unit(where));
  std::normal_distribution<double> g(0.0, 0.2 / std::sqrt(static_cast<double>(o.visual_dim)));
  json frames = json::array();
  const VectorXd& proto = visual[static_cast<std::size_t>(dominant % o.visual_groups)];
  for (int t = 0; t < o.frames; ++t) {
    VectorXd f = proto;
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += g(rng);
    frames.push_back(io::vector_to_json(f));
  }
  rec["frames"] = frames;
  return rec;
}

int run_factory(const FactoryOpts& o, const Context& ctx) {
  if (o.visual_dim < 1 || o.visual_groups < 1 || o.frames < 1 || o.train < 0 || o.test < 0)
    throw InvalidInput("factory sizes must be positive");
  Rng rng = ctx.rng();
  const ClipBank bank = make_clip_bank(o.classes, o.clips_per_class, o.dim, rng, o.noise);
  std::vector<UnitVec> homes;
  for (int c = 0; c < o.classes; ++c) homes.push_back(sample_uniform(rng));
  std::vector<VectorXd> visual;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int v = 0; v < o.visual_groups; ++v) {
    VectorXd p(o.visual_dim);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = g(rng);
    visual.push_back(p.normalized());
  }

  fs::create_directories(o.out_dir);
  std::vector<json> clips;
  for (const auto& c : bank.clips) clips.push_back(io::to_json(c));
  write_jsonl_with_meta(in_dir(o.out_dir, "clip_bank.jsonl"), clips, ctx);

  const GainRange gains{o.gain_lo, o.gain_hi};
  auto make_split = [&](int n, const char* name) {
    std::vector<json> recs;
    recs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) recs.push_back(scene_record(i, make_mixture(bank, o.k, rng, gains), homes, visual, o, rng));
    write_jsonl_with_meta(in_dir(o.out_dir, name), recs, ctx);
  };
  make_split(o.train, "mixtures_train.jsonl");
  make_split(o.test, "mixtures_test.jsonl");

  json homes_doc = {{"meta", io::to_json(ctx.prov)}, {"homes", json::array()}};
  for (const auto& h : homes) homes_doc["homes"].push_back(io::geopoint_to_json(from_unit(h)));
  io::write_json(in_dir(o.out_dir, "class_homes.json"), homes_doc);

  std::cout << "clips " << bank.clips.size() << "\ntrain_mixtures " << o.train << "\ntest_mixtures " << o.test
            << "\nclasses " << o.classes << "\nk " << o.k << "\n";
  return 0;
}

// ---------------------------------------------------------------- atoms

std::vector<MixtureSample> load_mixtures(const std::string& path) {
  require_file(path, "mixture file");
  std::vector<MixtureSample> out;
  for (const auto& j : io::read_jsonl(path)) out.push_back(io::mixture_from_json(j));
  if (out.empty()) throw InvalidInput("mixture file '" + path + "' is empty");
  return out;
}

Dictionary load_dictionary(const std::string& path) {
  require_file(path, "dictionary");
  return io::dictionary_from_json(io::read_json(path));
}

struct TrainAtomsOpts {
  std::string data;
  std::string out = "dictionary.json";
  std::string loss_csv = "atoms_loss.csv";
  int classes = 16;
  int block = 4;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-4;
};

int run_train_atoms(const TrainAtomsOpts& o, const Context& ctx) {
  const auto train = load_mixtures(o.data);
  Rng rng = ctx.rng();
  Dictionary dict = Dictionary::random(static_cast<int>(train.front().x_mix.size()), o.classes, o.block, rng);
  for (const auto& m : train)
    for (int c : m.classes())
      if (c < 0 || c >= o.classes) throw InvalidInput("mixture class " + std::to_string(c) + " exceeds --classes");
  MartOptions mo;
  mo.epochs = o.epochs;
  mo.batch = o.batch;
  mo.adam.lr = o.lr;
  log("training dictionary on " + std::to_string(train.size()) + " mixtures");
  const auto res = train_mart(dict, train, mo, rng);
  io::write_json(o.out, io::to_json(dict, ctx.prov));
  write_curve(o.loss_csv, res.loss_curve, ctx);
  std::cout << "kernels " << dict.num_kernels() << "\nbatches " << res.loss_curve.size() << "\nfinal_loss "
            << (res.loss_curve.empty() ? 0.0 : res.loss_curve.back()) << "\n";
  return 0;
}

struct EvalAtomsOpts {
  std::string dict;
  std::string data;
  std::string out;
};

int run_eval_atoms(const EvalAtomsOpts& o, const Context& ctx) {
  const Dictionary dict = load_dictionary(o.dict);
  const auto test = load_mixtures(o.data);
  const auto acc = decomposition_accuracy(dict, test);
  json rep = {{"meta", io::to_json(ctx.prov)},
              {"num_mixtures", acc.num_mixtures},
              {"per_step", acc.per_step},
              {"exact_sequence", acc.exact_sequence}};
  if (!o.out.empty()) io::write_json(o.out, rep);
  rep.erase("meta");
  std::cout << rep.dump(1) << "\n";
  return 0;
}

// ---------------------------------------------------------------- flow

struct Scene {
  int id = 0;
  std::optional<GeoPoint> location;
  FusionInput input;
};

std::vector<Scene> load_scenes(const std::string& path, const Dictionary& dict, int k) {
  require_file(path, "scene file");
  std::vector<Scene> out;
  for (const auto& j : io::read_jsonl(path)) {
    Scene s;
    s.id = j.value("id", static_cast<int>(out.size()));
    if (j.contains("location")) s.location = io::geopoint_from_json(j["location"]);
    if (!j.contains("frames")) throw InvalidInput("scene record " + std::to_string(s.id) + " has no frames");
    for (const auto& f : j["frames"]) s.input.visual_frames.push_back(io::vector_from_json(f));
    const VectorXd x = io::vector_from_json(j.at("x_mix"));
    s.input.atoms = atom_histogram(decompose(dict, x, k), dict.num_kernels());
    out.push_back(std::move(s));
  }
  if (out.empty()) throw InvalidInput("scene file '" + path + "' is empty");
  return out;
}

io::FlowCheckpoint load_flow(const std::string& path) {
  require_file(path, "flow checkpoint");
  return io::flow_from_json(io::read_json(path));
}

VectorXd scene_psi(const io::FlowCheckpoint& ck, const Scene& s) {
  if (!ck.fusion) throw InvalidInput("flow checkpoint has no fusion projection");
  return ck.fusion->fuse(s.input);
}

struct TrainFlowOpts {
  std::string data;
  std::string dict;
  std::string out = "flow.json";
  std::string loss_csv = "flow_loss.csv";
  int k = 3;
  int psi_dim = 8;
  std::string hidden = "64,64,64";
  int epochs = 300;
  int batch = 128;
  double lr = 1e-3;
  double final_lr_fraction = 1.0;
  int sample_steps = 100;
  int likelihood_steps = 64;
};

int run_train_flow(const TrainFlowOpts& o, const Context& ctx) {
  const Dictionary dict = load_dictionary(o.dict);
  const auto scenes = load_scenes(o.data, dict, o.k);
  std::vector<FusedExample> data;
  for (const auto& s : scenes) {
    if (!s.location) throw InvalidInput("training scene " + std::to_string(s.id) + " has no location");
    data.push_back({to_unit(*s.location), s.input});
  }
  const auto hidden = cli::parse_ints(o.hidden);
  Rng rng = ctx.rng();
  const int visual_dim = static_cast<int>(scenes.front().input.visual_frames.front().size());
  FusionProjection fusion(visual_dim, dict.num_kernels(), o.psi_dim, rng);
  FlowModel model(o.psi_dim, hidden, rng, TimeEmbedding{}, IntegrationDefaults{o.sample_steps, o.likelihood_steps, 1e-4});
  FlowTrainOptions fo;
  fo.epochs = o.epochs;
  fo.batch = o.batch;
  fo.adam.lr = o.lr;
  fo.final_lr_fraction = o.final_lr_fraction;
  log("training flow on " + std::to_string(data.size()) + " scenes");
  const auto res = train_flow(model, fusion, data, fo, rng);
  io::write_json(o.out, io::to_json(io::FlowCheckpoint{model, fusion, ctx.prov}));
  write_curve(o.loss_csv, res.loss_curve, ctx);
  std::cout << "params " << model.net().num_params() << "\nbatches " << res.loss_curve.size() << "\nfinal_loss "
            << (res.loss_curve.empty() ? 0.0 : res.loss_curve.back()) << "\n";
  return 0;
}

UnitVec medoid(const std::vector<UnitVec>& pts) {
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double cost = 0.0;
    for (const auto& q : pts) cost += geodesic_distance(pts[i], q);
    if (cost < best_cost) {
      best_cost = cost;
      best = i;
    }
  }
  return pts[best];
}

struct SampleOpts {
  std::string flow;
  std::string dict;
  std::string data;
  std::string out = "samples.jsonl";
  int k = 3;
  int n = 16;
  int steps = 0;
};

int run_sample(const SampleOpts& o, const Context& ctx) {
  if (o.n < 1) throw InvalidInput("--n must be at least 1");
  const auto ck = load_flow(o.flow);
  const Dictionary dict = load_dictionary(o.dict);
  const auto scenes = load_scenes(o.data, dict, o.k);
  const int steps = o.steps > 0 ? o.steps : ck.model.defaults().sample_steps;
  Rng rng = ctx.rng();
  std::vector<json> out;
  for (const auto& s : scenes) {
    const auto pts = sample_many(ck.model, scene_psi(ck, s), o.n, steps, rng);
    json rec = {{"id", s.id}, {"pred", io::geopoint_to_json(from_unit(medoid(pts)))}};
    if (s.location) rec["truth"] = io::geopoint_to_json(*s.location);
    json samples = json::array();
    for (const auto& p : pts) samples.push_back(io::geopoint_to_json(from_unit(p)));
    rec["samples"] = samples;
    out.push_back(std::move(rec));
  }
  write_jsonl_with_meta(o.out, out, ctx);
  std::cout << "records " << out.size() << "\nsamples_per_record " << o.n << "\nsteps " << steps << "\n";
  return 0;
}

struct NllOpts {
  std::string flow;
  std::string dict;
  std::string data;
  std::string records;
  std::string out = "nll.jsonl";
  int k = 3;
  int steps = 0;
};

int run_nll(const NllOpts& o, const Context& ctx) {
  const auto ck = load_flow(o.flow);
  const Dictionary dict = load_dictionary(o.dict);
  const auto scenes = load_scenes(o.data, dict, o.k);
  const int steps = o.steps > 0 ? o.steps : ck.model.defaults().likelihood_steps;

  std::map<int, double> ll;
  double sum = 0.0;
  for (const auto& s : scenes) {
    if (!s.location) throw InvalidInput("scene " + std::to_string(s.id) + " has no location");
    const double lp = log_likelihood(ck.model, to_unit(*s.location), scene_psi(ck, s), steps);
    ll[s.id] = lp;
    sum -= lp;
  }
  std::vector<json> out;
  if (!o.records.empty()) {
    require_file(o.records, "record file");
    for (auto rec : io::read_jsonl(o.records)) {
      const int id = rec.at("id").get<int>();
      const auto it = ll.find(id);
      if (it == ll.end()) throw InvalidInput("record id " + std::to_string(id) + " not found in the scene file");
      rec["log_likelihood"] = it->second;
      out.push_back(std::move(rec));
    }
  } else {
    for (const auto& s : scenes)
      out.push_back({{"id", s.id}, {"truth", io::geopoint_to_json(*s.location)}, {"log_likelihood", ll[s.id]}});
  }
  write_jsonl_with_meta(o.out, out, ctx);
  std::cout << "records " << out.size() << "\nmean_nll " << sum / static_cast<double>(scenes.size()) << "\n";
  return 0;
}

// ---------------------------------------------------------------- reward

struct RewardOpts {
  std::string rollouts;
  std::string gazetteer;
  std::string flow;
  std::string out = "rewards.jsonl";
  std::string levels = "1,5,12";
  std::string weights = "0.2,0.3,0.5";
  double coef_geo = 1.0;
  double coef_align = 1.0;
  double coef_calib = 0.1;
  double kl_beta = 0.01;
  int group_size = 8;
  int steps = 0;
};

int run_reward(const RewardOpts& o, const Context& ctx) {
  RewardConfig cfg;
  cfg.cells.levels = cli::parse_ints(o.levels);
  cfg.cells.weights = cli::parse_doubles(o.weights);
  cfg.coefficients = {o.coef_geo, o.coef_align, o.coef_calib};
  cfg.kl_beta = o.kl_beta;
  cfg.group_size = o.group_size;
  cfg.validate();
  require_file(o.gazetteer, "gazetteer");
  const auto gaz = EntityGazetteer::load(o.gazetteer);
  std::optional<io::FlowCheckpoint> flow;
  if (!o.flow.empty()) flow = load_flow(o.flow);
  require_file(o.rollouts, "rollout file");
  auto rollouts = io::read_jsonl(o.rollouts);

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<double> totals(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    auto& r = rollouts[i];
    const std::string key = r.at("group").dump();
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(i);

    const UnitVec pred = to_unit(io::geopoint_from_json(r.at("pred")));
    const UnitVec truth = to_unit(io::geopoint_from_json(r.at("truth")));
    const auto entities = parse_entities(r.value("text", ""), gaz);
    RewardComponents c;
    c.geo = r_geo(pred, truth, cfg.cells);
    c.align = r_align(entities, pred, gaz);
    if (flow && r.contains("psi")) {
      const int steps = o.steps > 0 ? o.steps : flow->model.defaults().likelihood_steps;
      c.calib = r_calib(flow->model, truth, io::vector_from_json(r["psi"]), steps);
    }
    totals[i] = total_reward(c, cfg.coefficients);
    r["entities"] = entities;
    r["rewards"] = {{"geo", c.geo}, {"align", c.align}, {"calib", c.calib}};
    r["total"] = totals[i];
  }
  for (const auto& key : order) {
    const auto& idx = groups[key];
    if (static_cast<int>(idx.size()) != cfg.group_size)
      throw InvalidInput("group " + key + " has " + std::to_string(idx.size()) + " rollouts, expected " +
                         std::to_string(cfg.group_size));
    std::vector<double> r;
    for (auto i : idx) r.push_back(totals[i]);
    const auto adv = group_advantages(r);
    for (std::size_t n = 0; n < idx.size(); ++n) rollouts[idx[n]]["advantage"] = adv[n];
  }
  write_jsonl_with_meta(o.out, rollouts, ctx);
  std::cout << "rollouts " << rollouts.size() << "\ngroups " << order.size() << "\nkl_beta " << cfg.kl_beta
            << "\ncoefficients " << o.coef_geo << "," << o.coef_align << "," << o.coef_calib << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOpts {
  std::string records;
  std::string out = "report.json";
  std::string csv = "report.csv";
  std::string thresholds = "25,200,750,2500";
  int knn = 3;
};

int run_evaluate(const EvaluateOpts& o, const Context& ctx) {
  require_file(o.records, "record file");
  std::vector<EvalRecord> recs;
  for (const auto& j : io::read_jsonl(o.records)) recs.push_back(io::eval_record_from_json(j));
  if (recs.empty()) throw InvalidInput("record file '" + o.records + "' is empty");
  const auto thresholds = cli::parse_doubles(o.thresholds);
  const MetricReport rep = evaluate(recs, thresholds, o.knn);
  json doc = io::to_json(rep);
  std::cout << doc.dump(1) << "\n";
  doc["meta"] = io::to_json(ctx.prov);
  io::write_json(o.out, doc);
  if (!o.csv.empty()) {
    io::write_text(o.csv, io::report_csv(rep));
    io::write_sidecar(o.csv, ctx.prov);
  }
  return 0;
}

// ---------------------------------------------------------------- heatmap

struct HeatmapOpts {
  std::string flow;
  std::string psi;
  std::string dict;
  std::string data;
  int id = 0;
  int k = 3;
  double resolution = 5.0;
  int steps = 32;
  std::string out_geojson = "heatmap.geojson";
  std::string out_csv = "heatmap.csv";
};

int run_heatmap(const HeatmapOpts& o, const Context& ctx) {
  const auto ck = load_flow(o.flow);
  VectorXd psi;
  if (!o.psi.empty()) {
    const auto v = cli::parse_doubles(o.psi);
    psi = Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else {
    const Dictionary dict = load_dictionary(o.dict);
    const auto scenes = load_scenes(o.data, dict, o.k);
    const auto it = std::find_if(scenes.begin(), scenes.end(), [&](const Scene& s) { return s.id == o.id; });
    if (it == scenes.end()) throw InvalidInput("scene id " + std::to_string(o.id) + " not found");
    psi = scene_psi(ck, *it);
  }
  const Heatmap h = heatmap(ck.model, psi, o.resolution, o.steps);
  const double half = 0.5 * h.resolution_deg;

  json features = json::array();
  std::ostringstream csv;
  csv << "lat,lon,density\n";
  for (std::size_t r = 0; r < h.lat_centers.size(); ++r) {
    for (std::size_t c = 0; c < h.lon_centers.size(); ++c) {
      const double lat = h.lat_centers[r], lon = h.lon_centers[c];
      const double d = h.density(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      const double s = lat - half, n = lat + half, w = lon - half, e = lon + half;
      json ring = json::array({json::array({w, s}), json::array({e, s}), json::array({e, n}), json::array({w, n}),
                               json::array({w, s})});
      features.push_back({{"type", "Feature"},
                          {"properties", {{"lat", lat}, {"lon", lon}, {"density", d}}},
                          {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}}});
      csv << io::format_double(lat) << ',' << io::format_double(lon) << ',' << io::format_double(d) << '\n';
    }
  }
  json doc = {{"type", "FeatureCollection"}, {"meta", io::to_json(ctx.prov)}, {"features", features}};
  io::write_json(o.out_geojson, doc);
  io::write_text(o.out_csv, csv.str());
  io::write_sidecar(o.out_csv, ctx.prov);
  std::cout << "cells " << features.size() << "\nresolution_deg " << h.resolution_deg << "\nmax_density "
            << h.density.maxCoeff() << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audiovisual geolocation toolkit: synthetic mixtures, acoustic atoms, spherical flows, rewards and metrics"};
  app.set_version_flag("--version", AVGEO_VERSION);
  app.require_subcommand(1);

  Context ctx;
  std::string config_path;
  std::function<int()> action;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", ctx.seed, "RNG seed")->capture_default_str();
    sub->add_option("--config", config_path, "key=value config file; flags win")->group(kFiles);
  };
  auto file = [&](CLI::App* sub, const std::string& name, std::string& target, const std::string& help) {
    return sub->add_option(name, target, help)->group(kFiles)->capture_default_str();
  };

  FactoryOpts fo;
  auto* factory = app.add_subcommand("factory", "Generate a clip bank and synthetic scene mixtures");
  common(factory);
  file(factory, "--out-dir", fo.out_dir, "Output directory");
  factory->add_option("--classes", fo.classes, "Sound classes C")->capture_default_str();
  factory->add_option("--dim", fo.dim, "Embedding dimension d")->capture_default_str();
  factory->add_option("--clips-per-class", fo.clips_per_class)->capture_default_str();
  factory->add_option("--k", fo.k, "Components per mixture")->capture_default_str();
  factory->add_option("--train", fo.train, "Training mixtures")->capture_default_str();
  factory->add_option("--test", fo.test, "Held-out mixtures")->capture_default_str();
  factory->add_option("--noise", fo.noise, "Clip perturbation scale")->capture_default_str();
  factory->add_option("--gain-lo", fo.gain_lo)->capture_default_str();
  factory->add_option("--gain-hi", fo.gain_hi)->capture_default_str();
  factory->add_option("--visual-dim", fo.visual_dim)->capture_default_str();
  factory->add_option("--visual-groups", fo.visual_groups, "Classes sharing a visual prototype")->capture_default_str();
  factory->add_option("--frames", fo.frames, "Visual frames per scene")->capture_default_str();
  factory->add_option("--spread-km", fo.spread_km, "RMS scatter around a class home")->capture_default_str();
  factory->callback([&] { action = [&] { return run_factory(fo, ctx); }; });

  TrainAtomsOpts ta;
  auto* train_atoms = app.add_subcommand("train-atoms", "Train the class-partitioned dictionary (MART)");
  common(train_atoms);
  file(train_atoms, "--data", ta.data, "Training mixtures JSONL");
  file(train_atoms, "--out", ta.out, "Dictionary checkpoint");
  file(train_atoms, "--loss-csv", ta.loss_csv, "Loss curve CSV");
  train_atoms->add_option("--classes", ta.classes)->capture_default_str();
  train_atoms->add_option("--block", ta.block, "Kernels per class")->capture_default_str();
  train_atoms->add_option("--epochs", ta.epochs)->capture_default_str();
  train_atoms->add_option("--batch", ta.batch)->capture_default_str();
  train_atoms->add_option("--lr", ta.lr)->capture_default_str();
  train_atoms->callback([&] { action = [&] { return run_train_atoms(ta, ctx); }; });

  EvalAtomsOpts ea;
  auto* eval_atoms = app.add_subcommand("eval-atoms", "Decomposition accuracy on held-out mixtures");
  common(eval_atoms);
  file(eval_atoms, "--dict", ea.dict, "Dictionary checkpoint");
  file(eval_atoms, "--data", ea.data, "Held-out mixtures JSONL");
  file(eval_atoms, "--out", ea.out, "Report JSON (optional)");
  eval_atoms->callback([&] { action = [&] { return run_eval_atoms(ea, ctx); }; });

  TrainFlowOpts tf;
  auto* train_flow_cmd = app.add_subcommand("train-flow", "Train the fused conditional flow on the sphere");
  common(train_flow_cmd);
  file(train_flow_cmd, "--data", tf.data, "Training scenes JSONL");
  file(train_flow_cmd, "--dict", tf.dict, "Dictionary checkpoint");
  file(train_flow_cmd, "--out", tf.out, "Flow checkpoint");
  file(train_flow_cmd, "--loss-csv", tf.loss_csv, "Loss curve CSV");
  train_flow_cmd->add_option("--k", tf.k, "Decomposition steps")->capture_default_str();
  train_flow_cmd->add_option("--psi-dim", tf.psi_dim)->capture_default_str();
  train_flow_cmd->add_option("--hidden", tf.hidden, "Hidden widths, comma separated")->capture_default_str();
  train_flow_cmd->add_option("--epochs", tf.epochs)->capture_default_str();
  train_flow_cmd->add_option("--batch", tf.batch)->capture_default_str();
  train_flow_cmd->add_option("--lr", tf.lr)->capture_default_str();
  train_flow_cmd->add_option("--final-lr-fraction", tf.final_lr_fraction, "Cosine decay target as a fraction of --lr")
      ->capture_default_str();
  train_flow_cmd->add_option("--sample-steps", tf.sample_steps)->capture_default_str();
  train_flow_cmd->add_option("--likelihood-steps", tf.likelihood_steps)->capture_default_str();
  train_flow_cmd->callback([&] { action = [&] { return run_train_flow(tf, ctx); }; });

  SampleOpts so;
  auto* sample_cmd = app.add_subcommand("sample", "Sample locations for each scene");
  common(sample_cmd);
  file(sample_cmd, "--flow", so.flow, "Flow checkpoint");
  file(sample_cmd, "--dict", so.dict, "Dictionary checkpoint");
  file(sample_cmd, "--data", so.data, "Scenes JSONL");
  file(sample_cmd, "--out", so.out, "Output records JSONL");
  sample_cmd->add_option("--k", so.k)->capture_default_str();
  sample_cmd->add_option("--n", so.n, "Samples per scene")->capture_default_str();
  sample_cmd->add_option("--steps", so.steps, "Integration steps (0: checkpoint default)")->capture_default_str();
  sample_cmd->callback([&] { action = [&] { return run_sample(so, ctx); }; });

  NllOpts no;
  auto* nll_cmd = app.add_subcommand("nll", "Log-likelihood of each scene's true location");
  common(nll_cmd);
  file(nll_cmd, "--flow", no.flow, "Flow checkpoint");
  file(nll_cmd, "--dict", no.dict, "Dictionary checkpoint");
  file(nll_cmd, "--data", no.data, "Scenes JSONL");
  file(nll_cmd, "--records", no.records, "Records to annotate by id (optional)");
  file(nll_cmd, "--out", no.out, "Output JSONL");
  nll_cmd->add_option("--k", no.k)->capture_default_str();
  nll_cmd->add_option("--steps", no.steps, "Integration steps (0: checkpoint default)")->capture_default_str();
  nll_cmd->callback([&] { action = [&] { return run_nll(no, ctx); }; });

  RewardOpts ro;
  auto* reward_cmd = app.add_subcommand("reward", "Score rollout groups and compute group-relative advantages");
  common(reward_cmd);
  file(reward_cmd, "--rollouts", ro.rollouts, "Rollouts JSONL");
  file(reward_cmd, "--gazetteer", ro.gazetteer, "GeoJSON gazetteer");
  file(reward_cmd, "--flow", ro.flow, "Flow checkpoint for the calibration term (optional)");
  file(reward_cmd, "--out", ro.out, "Annotated rollouts JSONL");
  reward_cmd->add_option("--levels", ro.levels, "Cell levels")->capture_default_str();
  reward_cmd->add_option("--weights", ro.weights, "Cell level weights")->capture_default_str();
  reward_cmd->add_option("--coef-geo", ro.coef_geo)->capture_default_str();
  reward_cmd->add_option("--coef-align", ro.coef_align)->capture_default_str();
  reward_cmd->add_option("--coef-calib", ro.coef_calib)->capture_default_str();
  reward_cmd->add_option("--kl-beta", ro.kl_beta)->capture_default_str();
  reward_cmd->add_option("--group-size", ro.group_size)->capture_default_str();
  reward_cmd->add_option("--steps", ro.steps)->capture_default_str();
  reward_cmd->callback([&] { action = [&] { return run_reward(ro, ctx); }; });

  EvaluateOpts eo;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy, median error, NLL and kNN metrics");
  common(evaluate_cmd);
  file(evaluate_cmd, "--records", eo.records, "Evaluation records JSONL");
  file(evaluate_cmd, "--out", eo.out, "Report JSON");
  file(evaluate_cmd, "--csv", eo.csv, "Report CSV");
  evaluate_cmd->add_option("--thresholds", eo.thresholds, "Accuracy thresholds in km")->capture_default_str();
  evaluate_cmd->add_option("--knn", eo.knn, "k of the kNN metrics")->capture_default_str();
  evaluate_cmd->callback([&] { action = [&] { return run_evaluate(eo, ctx); }; });

  HeatmapOpts ho;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Density grid as GeoJSON and CSV");
  common(heatmap_cmd);
  file(heatmap_cmd, "--flow", ho.flow, "Flow checkpoint");
  heatmap_cmd->add_option("--psi", ho.psi, "Conditioning vector, comma separated");
  file(heatmap_cmd, "--dict", ho.dict, "Dictionary checkpoint (with --data)");
  file(heatmap_cmd, "--data", ho.data, "Scenes JSONL (with --dict)");
  heatmap_cmd->add_option("--id", ho.id, "Scene id")->capture_default_str();
  heatmap_cmd->add_option("--k", ho.k)->capture_default_str();
  heatmap_cmd->add_option("--resolution", ho.resolution, "Grid spacing in degrees")->capture_default_str();
  heatmap_cmd->add_option("--steps", ho.steps)->capture_default_str();
  file(heatmap_cmd, "--out-geojson", ho.out_geojson, "GeoJSON output");
  file(heatmap_cmd, "--out-csv", ho.out_csv, "CSV output");
  heatmap_cmd->callback([&] { action = [&] { return run_heatmap(ho, ctx); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) cli::apply_config(*sub, config_path);
    std::set<std::string> skip;
    for (const CLI::Option* opt : sub->get_options())
      if (opt->get_group() == kFiles) skip.insert(opt->get_single_name());
    ctx.prov.version = AVGEO_VERSION;
    ctx.prov.seed = ctx.seed;
    ctx.stream = cli::fnv1a(sub->get_name());
    ctx.prov.config_hash = cli::fnv1a_hex(sub->get_name() + "\n" + cli::canonical_config(*sub, skip));
    return action();
  } catch (const CLI::Error& e) {
    std::cerr << "avgeo: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "avgeo: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "avgeo: runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
