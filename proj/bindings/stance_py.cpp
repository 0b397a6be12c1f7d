#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stance/cluster.hpp"
#include "stance/compose.hpp"
#include "stance/error.hpp"
#include "stance/graph.hpp"
#include "stance/pca.hpp"
#include "stance/pipeline.hpp"
#include "stance/synth.hpp"

namespace py = pybind11;
using namespace stance;

namespace {

ScoreMatrix scores_from_numpy(const Eigen::MatrixXd& x, std::vector<std::string> ids) {
  if (ids.empty())
    for (Eigen::Index i = 0; i < x.rows(); ++i) ids.push_back("u" + std::to_string(i));
  if (static_cast<Eigen::Index>(ids.size()) != x.rows())
    throw DataError("user id count does not match row count");
  ScoreMatrix s;
  s.user_ids = std::move(ids);
  s.scores = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) s.pc_labels.push_back("PC" + std::to_string(c + 1));
  return s;
}

DistanceMatrix distances_from_numpy(const Eigen::MatrixXd& d, std::vector<std::string> ids) {
  if (d.rows() != d.cols()) throw DataError("distance matrix must be square");
  DistanceMatrix out;
  out.n = static_cast<int>(d.rows());
  if (ids.empty())
    for (int i = 0; i < out.n; ++i) ids.push_back("u" + std::to_string(i));
  out.ids = std::move(ids);
  out.d64.resize(static_cast<std::size_t>(out.n) * out.n);
  for (int i = 0; i < out.n; ++i)
    for (int j = 0; j < out.n; ++j) out.d64[static_cast<std::size_t>(i) * out.n + j] = d(i, j);
  return out;
}

WeightedGraph graph_from_edges(int n_nodes, const std::vector<std::tuple<int, int, double>>& edges,
                               const std::vector<double>& self_mass) {
  WeightedGraph g;
  for (int i = 0; i < n_nodes; ++i) g.nodes.push_back(std::to_string(i));
  g.self_mass.assign(static_cast<std::size_t>(n_nodes), 0.0);
  if (!self_mass.empty()) {
    if (static_cast<int>(self_mass.size()) != n_nodes) throw DataError("self_mass length mismatch");
    g.self_mass = self_mass;
  }
  for (const auto& [a, b, w] : edges) {
    if (a == b || a < 0 || b < 0 || a >= n_nodes || b >= n_nodes)
      throw DataError("bad edge endpoints");
    if (w <= 0.0) throw DataError("edge weights must be positive");
    g.edges.push_back(WeightedGraph::Edge{std::min(a, b), std::max(a, b), w});
  }
  return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "stance: cross-sample latent stance pipeline (C++ core)";

  py::register_exception<ConfigError>(m, "StanceConfigError");
  py::register_exception<DataError>(m, "StanceDataError");
  py::register_exception<NumericError>(m, "StanceNumericError");

  py::class_<PcaModel>(m, "PcaModel")
      .def_readonly("means", &PcaModel::means)
      .def_readonly("loadings", &PcaModel::loadings)
      .def_readonly("variances", &PcaModel::variances)
      .def_readonly("total_variance", &PcaModel::total_variance)
      .def_property_readonly("components", &PcaModel::components)
      .def("truncated", &PcaModel::truncated, py::arg("k"));

  m.def(
      "fit_pca",
      [](const Eigen::MatrixXd& x, int max_components, std::uint64_t seed) {
        return fit_pca(x, max_components, seed);
      },
      py::arg("matrix"), py::arg("max_components"), py::arg("seed") = 0,
      "Truncated PCA of the column-centered matrix (implicit centering).");

  m.def(
      "transform",
      [](const PcaModel& model, const Eigen::MatrixXd& x) {
        std::vector<std::string> ids;
        for (Eigen::Index i = 0; i < x.rows(); ++i) ids.push_back("u" + std::to_string(i));
        return transform(model, x, std::move(ids)).scores;
      },
      py::arg("model"), py::arg("matrix"));

  m.def(
      "select_by_variance",
      [](const Eigen::VectorXd& variances, double total, double target) {
        bool shortfall = false;
        const int k = select_by_variance(variances, total, target, &shortfall);
        return py::make_tuple(k, shortfall);
      },
      py::arg("variances"), py::arg("total_variance"), py::arg("target") = 0.95);

  m.def(
      "scree_select",
      [](const Eigen::VectorXd& variances) {
        const auto r = scree_select(variances);
        return py::make_tuple(r.k, r.weak_elbow);
      },
      py::arg("variances"));

  m.def(
      "percentile_filter",
      [](const Eigen::MatrixXd& scores, double percentile) {
        const auto filtered = percentile_filter(scores_from_numpy(scores, {}), percentile);
        std::vector<std::int64_t> kept;
        for (const auto& id : filtered.user_ids) kept.push_back(std::stoll(id.substr(1)));
        return py::make_tuple(filtered.scores, kept);
      },
      py::arg("scores"), py::arg("percentile") = 90.0,
      "Returns (filtered_scores, kept_row_indices) under the nearest-rank rule.");

  m.def(
      "cosine_distances",
      [](const Eigen::MatrixXd& scores, int threads) {
        const auto d = cosine_distances(scores_from_numpy(scores, {}), false, threads);
        Eigen::MatrixXd out(d.n, d.n);
        for (int i = 0; i < d.n; ++i)
          for (int j = 0; j < d.n; ++j) out(i, j) = d.at(i, j);
        return out;
      },
      py::arg("scores"), py::arg("threads") = 1);

  m.def(
      "hdbscan",
      [](const Eigen::MatrixXd& distances, int min_cluster_size, int min_samples,
         const std::string& selection) {
        const auto sel = selection == "leaf" ? ClusterSelection::Leaf : ClusterSelection::ExcessOfMass;
        const auto a = hdbscan(distances_from_numpy(distances, {}), min_cluster_size, min_samples, sel);
        return py::make_tuple(a.labels, a.stabilities, a.sizes);
      },
      py::arg("distances"), py::arg("min_cluster_size") = 20, py::arg("min_samples") = 0,
      py::arg("selection") = "eom",
      "Full HDBSCAN on a precomputed distance matrix; returns (labels, stabilities, sizes); "
      "label -1 means noise.");

  m.def(
      "louvain",
      [](int n_nodes, const std::vector<std::tuple<int, int, double>>& edges, std::uint64_t seed,
         double resolution, const std::vector<double>& self_mass) {
        const auto g = graph_from_edges(n_nodes, edges, self_mass);
        const auto p = louvain(g, seed, resolution);
        return py::make_tuple(p.community, p.modularity);
      },
      py::arg("n_nodes"), py::arg("edges"), py::arg("seed") = 0, py::arg("resolution") = 1.0,
      py::arg("self_mass") = std::vector<double>{});

  m.def(
      "modularity",
      [](int n_nodes, const std::vector<std::tuple<int, int, double>>& edges,
         const std::vector<int>& community, double resolution, const std::vector<double>& self_mass) {
        return modularity(graph_from_edges(n_nodes, edges, self_mass), community, resolution);
      },
      py::arg("n_nodes"), py::arg("edges"), py::arg("community"), py::arg("resolution") = 1.0,
      py::arg("self_mass") = std::vector<double>{});

  m.def("adjusted_rand_index", &adjusted_rand_index, py::arg("a"), py::arg("b"),
        py::arg("exclude_noise") = false, py::arg("noise") = -1);

  m.def(
      "generate_planted",
      [](const std::string& config_path, const std::string& out_dir) {
        const auto gt = generate(PlantedConfig::from_json_file(config_path), out_dir);
        return py::make_tuple(gt.user_ids, gt.stance);
      },
      py::arg("config_path"), py::arg("out_dir"));

  m.def(
      "run_pipeline",
      [](const std::string& config_path, const std::string& out_dir, int threads, bool force) {
        const auto res = run_pipeline(RunConfig::from_json_file(config_path), out_dir, threads, force);
        return res.manifest.dump();
      },
      py::arg("config_path"), py::arg("out_dir"), py::arg("threads") = 1, py::arg("force") = false,
      "Runs ingest>compose>cluster>graph>report; returns the manifest as a JSON string.");

  m.attr("__version__") = "0.1.0";
}
