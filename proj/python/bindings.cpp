#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "avgeo/atoms.hpp"
#include "avgeo/cells.hpp"
#include "avgeo/errors.hpp"
#include "avgeo/eval.hpp"
#include "avgeo/io.hpp"
#include "avgeo/rewards.hpp"
#include "avgeo/rfm.hpp"
#include "avgeo/sphere.hpp"

namespace py = pybind11;
using namespace avgeo;

namespace {

using LatLon = std::pair<double, double>;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

UnitVec unit(const LatLon& p) { return to_unit(GeoPoint::make(p.first, p.second)); }

LatLon lat_lon(const UnitVec& u) {
  const GeoPoint g = from_unit(u);
  return {g.lat, g.lon};
}

std::vector<UnitVec> units(const Points& pts) {
  std::vector<UnitVec> out;
  out.reserve(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out.push_back(unit({pts(i, 0), pts(i, 1)}));
  return out;
}

Points to_points(const std::vector<UnitVec>& us) {
  Points out(static_cast<Eigen::Index>(us.size()), 2);
  for (std::size_t i = 0; i < us.size(); ++i) {
    const auto [lat, lon] = lat_lon(us[i]);
    out(static_cast<Eigen::Index>(i), 0) = lat;
    out(static_cast<Eigen::Index>(i), 1) = lon;
  }
  return out;
}

CellLevelWeights weights(const std::vector<int>& levels, const std::vector<double>& w) {
  CellLevelWeights cw{levels, w};
  cw.validate();
  return cw;
}

py::dict prd_dict(const PrdMetrics& m) {
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["density"] = m.density;
  d["coverage"] = m.coverage;
  return d;
}

} // namespace

PYBIND11_MODULE(_avgeo, m) {
  m.doc() = "Native core of the avgeo package";

  static py::exception<InvalidInput> invalid(m, "InvalidInput", PyExc_ValueError);
  static py::exception<SingularityError> singular(m, "SingularityError", PyExc_ArithmeticError);
  static py::exception<IntegrationError> integration(m, "IntegrationError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidInput& e) {
      invalid(e.what());
    } catch (const SingularityError& e) {
      singular(e.what());
    } catch (const IntegrationError& e) {
      integration(e.what());
    }
  });

  m.attr("EARTH_RADIUS_KM") = kEarthRadiusKm;

  m.def("to_unit", [](double lat, double lon) -> Vec3 { return to_unit(GeoPoint::make(lat, lon)).vec(); },
        py::arg("lat"), py::arg("lon"), "Unit 3-vector of a (lat, lon) in degrees.");
  m.def("from_unit", [](const Vec3& v) { return lat_lon(UnitVec::normalize(v)); }, py::arg("v"));
  m.def("geodesic_distance_km", [](const LatLon& a, const LatLon& b) { return geodesic_distance_km(unit(a), unit(b)); },
        py::arg("a"), py::arg("b"));
  m.def("exp_map", [](const Vec3& base, const Vec3& v) -> Vec3 { return exp_map(UnitVec::normalize(base), v).vec(); },
        py::arg("base"), py::arg("v"));
  m.def("log_map",
        [](const Vec3& base, const Vec3& target) -> Vec3 {
          return log_map(UnitVec::normalize(base), UnitVec::normalize(target)).v;
        },
        py::arg("base"), py::arg("target"));
  m.def("geodesic_interpolate",
        [](const Vec3& y0, const Vec3& y1, double t) {
          const auto g = geodesic_interpolate(UnitVec::normalize(y0), UnitVec::normalize(y1), t);
          return std::pair<Vec3, Vec3>(g.point.vec(), g.velocity.v);
        },
        py::arg("y0"), py::arg("y1"), py::arg("t"), "Point and velocity at t on the constant-speed geodesic.");

  m.def("cell_token", [](const LatLon& p, int level) { return cell_at(unit(p), level).token(); }, py::arg("point"),
        py::arg("level"));
  m.def("r_geo",
        [](const LatLon& pred, const LatLon& truth, const std::vector<int>& levels, const std::vector<double>& w) {
          return r_geo(unit(pred), unit(truth), weights(levels, w));
        },
        py::arg("pred"), py::arg("truth"), py::arg("levels") = std::vector<int>{1, 5, 12},
        py::arg("weights") = std::vector<double>{0.2, 0.3, 0.5});
  m.def("group_advantages", [](const std::vector<double>& r) { return group_advantages(r); }, py::arg("rewards"));

  py::class_<Dictionary>(m, "Dictionary")
      .def(py::init<MatrixXd, int>(), py::arg("kernels"), py::arg("num_classes"))
      .def_static(
          "random",
          [](int dim, int num_classes, int block_size, std::uint64_t seed) {
            Rng rng = make_rng(seed);
            return Dictionary::random(dim, num_classes, block_size, rng);
          },
          py::arg("dim"), py::arg("num_classes"), py::arg("block_size"), py::arg("seed") = 7)
      .def_static("load", [](const std::string& path) { return io::dictionary_from_json(io::read_json(path)); },
                  py::arg("path"))
      .def_property_readonly("kernels", [](const Dictionary& d) { return d.kernels(); })
      .def_property_readonly("num_classes", &Dictionary::num_classes)
      .def_property_readonly("block_size", &Dictionary::block_size)
      .def_property_readonly("dim", &Dictionary::dim)
      .def(
          "decompose",
          [](const Dictionary& d, const VectorXd& x, int K) {
            const auto t = decompose(d, x, K);
            py::list steps;
            for (const auto& s : t.steps) {
              py::dict step;
              step["kernel"] = s.kernel;
              step["class"] = s.predicted_class;
              step["activation"] = s.activation;
              step["reconstruction"] = s.reconstruction;
              step["residual_norm"] = s.residual_norm;
              steps.append(step);
            }
            return py::make_tuple(steps, t.final_residual);
          },
          py::arg("x_mix"), py::arg("k"), "Returns (steps, final residual).");

  py::class_<FlowModel>(m, "FlowModel")
      .def_static("load", [](const std::string& path) { return io::flow_from_json(io::read_json(path)).model; },
                  py::arg("path"))
      .def_static(
          "zero", [](int psi_dim, std::uint64_t seed) {
            Rng rng = make_rng(seed);
            FlowModel f(psi_dim, {8}, rng);
            f.net().zero_output_layer();
            return f;
          },
          py::arg("psi_dim"), py::arg("seed") = 7, "Flow with an identically zero field (uniform density).")
      .def_property_readonly("psi_dim", &FlowModel::psi_dim)
      .def(
          "sample",
          [](const FlowModel& f, const VectorXd& psi, int n, int steps, std::uint64_t seed) {
            Rng rng = make_rng(seed);
            return to_points(sample_many(f, psi, n, steps, rng));
          },
          py::arg("psi"), py::arg("n"), py::arg("steps") = 100, py::arg("seed") = 7, "n x 2 array of (lat, lon).")
      .def(
          "log_likelihood",
          [](const FlowModel& f, const Points& pts, const VectorXd& psi, int steps) {
            return log_likelihood_many(f, units(pts), psi, steps);
          },
          py::arg("points"), py::arg("psi"), py::arg("steps") = 64, "Log-density in nats at each (lat, lon) row.");

  py::class_<EntityGazetteer>(m, "Gazetteer")
      .def_static("load", &EntityGazetteer::load, py::arg("path"))
      .def_property_readonly("names", &EntityGazetteer::names)
      .def("contains", [](const EntityGazetteer& g, const std::string& name, const LatLon& p) {
        return g.contains(name, unit(p));
      }, py::arg("name"), py::arg("point"))
      .def("parse_entities", [](const EntityGazetteer& g, const std::string& text) { return parse_entities(text, g); },
           py::arg("text"))
      .def("r_align",
           [](const EntityGazetteer& g, const std::vector<std::string>& entities, const LatLon& pred) {
             return r_align(entities, unit(pred), g);
           },
           py::arg("entities"), py::arg("pred"));

  m.def(
      "evaluate",
      [](const Points& preds, const Points& truths, const std::vector<double>& thresholds) {
        if (preds.rows() != truths.rows()) throw InvalidInput("predictions and truths differ in length");
        std::vector<EvalRecord> recs;
        for (Eigen::Index i = 0; i < preds.rows(); ++i)
          recs.push_back({GeoPoint::make(preds(i, 0), preds(i, 1)), GeoPoint::make(truths(i, 0), truths(i, 1)),
                          std::nullopt, {}});
        py::dict out;
        py::dict acc;
        for (const auto& a : accuracy_at(recs, thresholds)) acc[py::float_(a.threshold_km)] = a.accuracy;
        out["accuracy"] = acc;
        out["median_error_km"] = median_error(recs);
        return out;
      },
      py::arg("preds"), py::arg("truths"), py::arg("thresholds_km") = kDefaultThresholdsKm,
      "Threshold accuracies and median error for n x 2 (lat, lon) arrays.");
  m.def(
      "prd_metrics",
      [](const Points& generated, const Points& reference, int k) {
        return prd_dict(prd_metrics(units(generated), units(reference), k));
      },
      py::arg("generated"), py::arg("reference"), py::arg("k") = 3);
}
