#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "decompose.hpp"
#include "error.hpp"
#include "fock.hpp"
#include "noon.hpp"
#include "version.hpp"

namespace cse_lab {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json matrix_to_json(const Matrix& m) {
  Json re = Json::array(), im = Json::array();
  bool any_imag = false;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json rr = Json::array(), ri = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
      any_imag = any_imag || m(r, c).imag() != 0.0;
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ri));
  }
  Json out{{"real", std::move(re)}};
  if (any_imag) out["imag"] = std::move(im);
  return out;
}

inline Matrix matrix_from_json(const Json& j) {
  const auto& re = j.at("real");
  const auto rows = static_cast<Eigen::Index>(re.size());
  Matrix m = Matrix::Zero(rows, rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    require(re[r].size() == re.size(), ErrorKind::dimension_mismatch, "stored matrix is not square");
    for (Eigen::Index c = 0; c < rows; ++c) m(r, c) = re[r][c].get<double>();
  }
  if (j.contains("imag")) {
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < rows; ++c) m(r, c) += cplx(0.0, j["imag"][r][c].get<double>());
  }
  return m;
}

inline Json dims_to_json(const Dims& dims) {
  Json out = Json::array();
  for (auto d : dims) out.push_back(d.dim);
  return out;
}

inline Dims dims_from_json(const Json& j) {
  Dims out;
  for (const auto& v : j) out.push_back(FockDim{v.get<int>()});
  return out;
}

inline Json state_to_json(const DensityMatrix& rho) {
  Json out{{"dims", dims_to_json(rho.dims())}};
  if (rho.is_diagonal()) {
    Json diag = Json::array();
    for (Eigen::Index k = 0; k < rho.size(); ++k) diag.push_back(rho.matrix()(k, k).real());
    out["diagonal"] = std::move(diag);
  } else {
    out["matrix"] = matrix_to_json(rho.matrix());
  }
  return out;
}

inline DensityMatrix state_from_json(const Json& j, bool physical = true) {
  const Dims dims = dims_from_json(j.at("dims"));
  if (j.contains("diagonal")) {
    RealVector d(static_cast<Eigen::Index>(j["diagonal"].size()));
    for (Eigen::Index k = 0; k < d.size(); ++k) d(k) = j["diagonal"][k].get<double>();
    return DensityMatrix::from_diagonal(dims, d, physical);
  }
  return DensityMatrix(dims, matrix_from_json(j.at("matrix")), physical);
}

inline Json header(const char* kind) { return Json{{"schema", kSchema}, {"version", kVersion}, {"kind", kind}}; }

inline void check_schema(const Json& j, const char* kind) {
  require(j.is_object() && j.value("schema", "") == kSchema, ErrorKind::invalid_argument,
          std::string("unsupported schema, expected ") + kSchema);
  require(j.value("kind", "") == kind, ErrorKind::invalid_argument, std::string("expected a ") + kind + " document");
}

}  // namespace detail

inline Json to_json(const Representation& rep) {
  Json j = detail::header("representation");
  j["cutoff"] = rep.cutoff();
  j["probe_kind"] = to_string(rep.probe_set.kind);
  Json probes = Json::array();
  for (std::size_t k = 0; k < rep.probe_set.size(); ++k) {
    Json p{{"label", rep.probe_set.labels[k]}};
    if (rep.probe_set.kind == ProbeKind::generic) {
      p["state"] = detail::state_to_json(rep.probe_set.probes[k]);
    } else {
      const cplx a = rep.probe_set.amplitudes[k];
      p["amplitude"] = Json::array({a.real(), a.imag()});
    }
    probes.push_back(std::move(p));
  }
  j["probes"] = std::move(probes);
  j["coefficients"] = std::vector<double>(rep.coefficients.data(), rep.coefficients.data() + rep.coefficients.size());
  j["zeta_plus"] = rep.zeta_plus;
  j["zeta_minus"] = rep.zeta_minus;
  j["zeta"] = rep.zeta();
  j["fidelity"] = rep.fidelity;
  j["psd_tolerance"] = rep.psd_tolerance;
  j["target"] = detail::state_to_json(rep.target);
  j["warnings"] = rep.warnings;
  return j;
}

/// Rebuilds a representation; probes are regenerated from their amplitudes
/// and the stored coefficients are used as is.
inline Representation representation_from_json(const Json& j) {
  detail::check_schema(j, "representation");
  const int cutoff = j.at("cutoff").get<int>();
  const std::string kind = j.at("probe_kind").get<std::string>();
  const auto& probes = j.at("probes");
  ProbeSet set;
  if (kind == "generic") {
    std::vector<DensityMatrix> states;
    std::vector<std::string> labels;
    for (const auto& p : probes) {
      states.push_back(detail::state_from_json(p.at("state")));
      labels.push_back(p.at("label").get<std::string>());
    }
    set = ProbeSet::generic(std::move(states), std::move(labels));
  } else {
    std::vector<cplx> amps;
    for (const auto& p : probes) amps.emplace_back(p.at("amplitude")[0].get<double>(), p.at("amplitude")[1].get<double>());
    if (kind == "phase_averaged") {
      std::vector<double> mags;
      for (auto a : amps) mags.push_back(a.real());
      set = ProbeSet::phase_averaged(mags, FockDim{cutoff});
    } else if (kind == "coherent") {
      set = ProbeSet::coherent(amps, FockDim{cutoff});
    } else {
      throw Error(ErrorKind::invalid_argument, "unknown probe kind '" + kind + "'");
    }
  }
  Representation rep;
  rep.probe_set = std::move(set);
  const auto c = j.at("coefficients").get<std::vector<double>>();
  detail::require(c.size() == rep.probe_set.size(), ErrorKind::dimension_mismatch,
                  "coefficient count differs from probe count");
  rep.coefficients = Eigen::Map<const RealVector>(c.data(), static_cast<Eigen::Index>(c.size()));
  rep.zeta_plus = j.at("zeta_plus").get<double>();
  rep.zeta_minus = j.at("zeta_minus").get<double>();
  rep.fidelity = j.at("fidelity").get<double>();
  rep.psd_tolerance = j.value("psd_tolerance", 1e-8);
  rep.target = detail::state_from_json(j.at("target"));
  rep.warnings = j.value("warnings", std::vector<std::string>{});
  return rep;
}

inline Json to_json(const NoonDecomposition& dec) {
  Json j = detail::header("noon_decomposition");
  j["N"] = dec.order;
  j["n"] = dec.n;
  j["m"] = dec.m;
  j["theta0"] = dec.theta0;
  j["scale"] = dec.scale;
  j["even_route"] = dec.even_route;
  Json bs = Json::array(), corr = Json::array();
  for (const auto& t : dec.bs_terms) bs.push_back({{"weight", t.weight}, {"theta", t.theta}});
  for (const auto& t : dec.correction_terms)
    corr.push_back({{"weight", t.weight}, {"photons_a", t.j}, {"photons_b", dec.order - t.j}});
  j["bs_terms"] = std::move(bs);
  j["correction_terms"] = std::move(corr);
  j["total_weight"] = dec.total_weight();
  return j;
}

inline Json to_json(const TwoModeRepresentation& rep) {
  Json j = to_json(rep.decomposition);
  j["kind"] = "noon_representation";
  j["cutoff"] = rep.cutoff;
  j["fidelity"] = rep.fidelity;
  j["zeta_plus"] = rep.zeta_plus;
  j["zeta_minus"] = rep.zeta_minus;
  j["zeta"] = rep.zeta();
  Json fock = Json::object();
  for (const auto& [n, amps] : rep.fock_amplitudes)
    fock[std::to_string(n)] = {{"amplitudes", amps}, {"coefficients", rep.fock_coefficients.at(n)}};
  j["fock_representations"] = std::move(fock);
  Json terms = Json::array();
  for (const auto& t : rep.terms)
    terms.push_back({{"coefficient", t.coefficient},
                     {"alpha_a", t.alpha_a},
                     {"alpha_b", t.alpha_b},
                     {"theta", t.theta},
                     {"interfered", t.interfered},
                     {"family", t.family}});
  j["terms"] = std::move(terms);
  return j;
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  if (!dir.empty()) fs::create_directories(dir, ec);
  detail::require(!ec, ErrorKind::io, "cannot create directory " + dir.string());
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    detail::require(static_cast<bool>(os), ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) {
      os.close();
      fs::remove(tmp, ec);
      throw Error(ErrorKind::io, "failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::io, "cannot move report into " + path.string());
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  detail::require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::invalid_argument, path.string() + ": " + e.what());
  }
}

}  // namespace cse_lab
