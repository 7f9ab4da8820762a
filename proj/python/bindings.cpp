// Python module _idglab. Structured values cross the boundary as JSON text;
// the idg_lab package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "idg/data.hpp"
#include "idg/errors.hpp"
#include "idg/experiments.hpp"
#include "idg/objectives.hpp"
#include "idg/oracle.hpp"
#include "idg/suites.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace idg;

namespace {

LossSpec loss_named(const std::string& name) { return json{{"kind", name}}.get<LossSpec>(); }

std::string random_world_json(std::uint64_t seed, std::size_t n_domains, std::size_t n_inputs,
                              std::size_t n_labels, const std::string& loss) {
  WorldConstraints c;
  c.loss = loss_named(loss);
  return json(random_world(seed, {n_domains, n_inputs, n_labels}, c)).dump();
}

std::string theorem1_json(const std::string& world, std::size_t n_codes) {
  return json(verify_theorem1(world_from_json(json::parse(world)), n_codes)).dump();
}

double encoder_idg_risk(const std::string& world, const std::vector<std::size_t>& code_map, std::size_t n_codes) {
  return idg_risk(world_from_json(json::parse(world)), Encoder::from_map(code_map, n_codes)).idg_risk;
}

double world_bayes_risk(const std::string& world) { return bayes_risk_from_x(world_from_json(json::parse(world))); }

std::string suite_json(const std::string& name, std::size_t worlds, std::uint64_t seed, bool allow_invalid,
                       unsigned jobs) {
  SuiteOptions o;
  o.worlds = worlds;
  o.seed = seed;
  o.allow_invalid = allow_invalid;
  o.jobs = jobs;
  py::gil_scoped_release release;
  return json(run_suite(name, o)).dump();
}

std::string gen_csv(std::uint64_t seed, std::size_t n_domains, std::size_t n_labels, std::size_t per_cluster) {
  SyntheticSpec s;
  s.n_domains = n_domains;
  s.n_labels = n_labels;
  s.per_cluster = per_cluster;
  return to_csv(gen_synthetic(seed, s));
}

std::string ingest_json(const std::string& text) {
  const IngestReport r = ingest_csv_text(text);
  return json{{"rows", r.data.size()},
              {"width", r.data.width()},
              {"domains", r.data.n_domains()},
              {"labels", r.data.n_labels()}}
      .dump();
}

std::string train_probe_json(const std::string& csv, const std::string& config, const std::string& mode,
                             const std::vector<std::uint64_t>& seeds, std::size_t max_iters) {
  const EmbeddingDataset data = ingest_csv_text(csv).data;
  const TrainConfig c = json::parse(config).get<TrainConfig>();
  PairOptions po;
  po.mode = mode == "avg" ? ProbeMode::Average : ProbeMode::Worst;
  po.seeds = seeds;
  po.probe.max_iters = max_iters;
  py::gil_scoped_release release;
  validate_config(c, data);
  const TrainResult model = train(data, c);
  json out = evaluate_all_pairs(embed_dataset(data, model), po);
  out["history"] = json::array();
  for (const auto& h : model.history)
    out["history"].push_back({{"epoch", h.epoch}, {"l_aug", h.l_aug}, {"l_supp", h.l_supp}, {"total", h.total}});
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_idglab, m) {
  m.doc() = "Finite-world verification and representation experiments";

  py::register_exception<Error>(m, "IdgError", PyExc_ValueError);

  m.def("random_world", &random_world_json, py::arg("seed"), py::arg("n_domains") = 2, py::arg("n_inputs") = 4,
        py::arg("n_labels") = 2, py::arg("loss") = "zero_one", "Random world satisfying the assumptions, as JSON.");
  m.def("verify_theorem1", &theorem1_json, py::arg("world"), py::arg("n_codes"),
        "Exhaustive optimality check over deterministic encoders, as JSON.");
  m.def("idg_risk", &encoder_idg_risk, py::arg("world"), py::arg("code_map"), py::arg("n_codes"));
  m.def("bayes_risk", &world_bayes_risk, py::arg("world"));
  m.def("run_suite", &suite_json, py::arg("name"), py::arg("worlds") = 100, py::arg("seed") = 0,
        py::arg("allow_invalid") = false, py::arg("jobs") = 1);
  m.def("gen_synthetic", &gen_csv, py::arg("seed"), py::arg("n_domains") = 4, py::arg("n_labels") = 7,
        py::arg("per_cluster") = 20, "Synthetic embedding dataset as CSV text.");
  m.def("ingest", &ingest_json, py::arg("text"));
  m.def("train_probe", &train_probe_json, py::arg("csv"), py::arg("config"), py::arg("mode") = "worst",
        py::arg("seeds") = std::vector<std::uint64_t>{0}, py::arg("max_iters") = 3000,
        "Train an encoder and probe every (source, target) pair, as JSON.");
}
