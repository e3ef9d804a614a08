#include "fex/json_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fex/linalg.hpp"

namespace fex::io {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ParseError(msg); }

const json& field(const json& doc, const char* key) {
  if (!doc.is_object()) fail(std::string("expected an object carrying \"") + key + "\"");
  auto it = doc.find(key);
  if (it == doc.end()) fail(std::string("missing field \"") + key + "\"");
  return *it;
}

int int_field(const json& doc, const char* key) {
  const json& v = field(doc, key);
  if (!v.is_number_integer()) fail(std::string("field \"") + key + "\" must be an integer");
  return v.get<int>();
}

double real_field(const json& doc, const char* key) {
  const json& v = field(doc, key);
  if (!v.is_number()) fail(std::string("field \"") + key + "\" must be a number");
  return v.get<double>();
}

std::string string_field(const json& doc, const char* key) {
  const json& v = field(doc, key);
  if (!v.is_string()) fail(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::vector<double> real_array(const json& v, const char* what) {
  if (!v.is_array()) fail(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number()) fail(std::string(what) + " must contain only numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

json flat(const Matrix& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  return a;
}

Matrix square_from_flat(const json& v, int d, const char* what) {
  const std::vector<double> data = real_array(v, what);
  if (static_cast<int>(data.size()) != d * d)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(d * d) +
                     " entries, got " + std::to_string(data.size()));
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = data[i * d + j];
  return m;
}

std::vector<Matrix> square_list(const json& doc, int count, int d, const char* what) {
  const json& arr = field(doc, "matrices");
  if (!arr.is_array() || static_cast<int>(arr.size()) != count)
    throw ShapeError(std::string(what) + ": \"matrices\" must list exactly " +
                     std::to_string(count) + " matrices");
  std::vector<Matrix> out;
  out.reserve(arr.size());
  for (const json& e : arr) out.push_back(square_from_flat(e, d, what));
  return out;
}

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vector_from_json(const json& v, const char* what) {
  const std::vector<double> data = real_array(v, what);
  Vector out(static_cast<int>(data.size()));
  for (int i = 0; i < out.size(); ++i) out[i] = data[i];
  return out;
}

const char* certainty_name(Certainty c) {
  switch (c) {
    case Certainty::CertifiedIn: return "certified_in";
    case Certainty::CertifiedOut: return "certified_out";
    default: return "undecided";
  }
}

json limits_to_json(const CertificateLimits& limits) {
  json j = json::object();
  j["reconstruction"] = limits.reconstruction;
  j["partition"] = limits.partition;
  j["component_membership"] = limits.component_membership;
  return j;
}

CertificateLimits limits_from_json(const json& doc) {
  CertificateLimits out;
  out.reconstruction = real_field(doc, "reconstruction");
  out.partition = real_field(doc, "partition");
  out.component_membership = real_field(doc, "component_membership");
  if (out.reconstruction <= 0 || out.partition <= 0 || out.component_membership <= 0)
    fail("certificate limits must be positive");
  return out;
}

json step_to_json(const DilationStep& s) {
  json j = json::object();
  j["beta"] = vector_to_json(s.beta);
  j["gamma"] = vector_to_json(s.gamma);
  j["alpha_scale"] = s.alpha_scale;
  j["alpha_residual"] = s.alpha_residual;
  j["dim_before"] = s.dim_before;
  j["dim_after"] = s.dim_after;
  j["dilated"] = to_json(s.dilated);
  return j;
}

json core_certificate_json(const DecompositionCertificate& cert,
                           const SetDescription& set,
                           const CertificateLimits& limits) {
  json j = json::object();
  j["kind"] = "decomposition_certificate";
  j["set"] = to_json(set);
  j["seed"] = cert.seed;
  json tol = json::object();
  tol["membership"] = cert.membership_tol;
  tol["kernel"] = cert.kernel_tol;
  j["tolerances"] = tol;
  j["limits"] = limits_to_json(limits);
  j["input"] = to_json(cert.input);
  j["arveson"] = to_json(cert.arveson);
  json steps = json::array();
  for (const DilationStep& s : cert.steps) steps.push_back(step_to_json(s));
  j["steps"] = steps;
  json comps = json::array();
  for (const MatrixTuple& c : cert.components) comps.push_back(to_json(c));
  j["components"] = comps;
  json isos = json::array();
  for (const Matrix& v : cert.isometries) isos.push_back(to_json(v));
  j["isometries"] = isos;
  j["component_dilation_dims"] = cert.component_dilation_dims;
  j["component_commutant_dims"] = cert.component_commutant_dims;
  j["reconstruction_residual"] = cert.reconstruction_residual;
  j["partition_residual"] = cert.partition_residual;
  return j;
}

}  // namespace

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open file: " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail("invalid JSON in file: " + path);
  return doc;
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) fail("cannot write file: " + path);
  out << dump(doc);
  if (!out) fail("short write to file: " + path);
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

json to_json(const Matrix& m) {
  json j = json::object();
  j["rows"] = static_cast<int>(m.rows());
  j["cols"] = static_cast<int>(m.cols());
  j["data"] = flat(m);
  return j;
}

Matrix matrix_from_json(const json& doc) {
  const int rows = int_field(doc, "rows");
  const int cols = int_field(doc, "cols");
  if (rows < 0 || cols < 0) throw ShapeError("matrix: negative dimensions");
  const std::vector<double> data = real_array(field(doc, "data"), "matrix data");
  if (static_cast<int>(data.size()) != rows * cols)
    throw ShapeError("matrix: data length does not match rows*cols");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = data[i * cols + j];
  return m;
}

json to_json(const LinearPencil& a) {
  json j = json::object();
  j["g"] = a.g();
  j["d"] = a.d();
  json ms = json::array();
  for (const Matrix& m : a.a) ms.push_back(flat(m));
  j["matrices"] = ms;
  return j;
}

LinearPencil pencil_from_json(const json& doc) {
  const int g = int_field(doc, "g");
  const int d = int_field(doc, "d");
  if (g < 0) throw ShapeError("pencil: negative arity");
  if (g == 0) return LinearPencil{};
  if (d <= 0) throw ShapeError("pencil: order must be positive");
  return LinearPencil(square_list(doc, g, d, "pencil"));
}

json to_json(const MatrixTuple& x) {
  json j = json::object();
  j["g"] = x.g();
  j["n"] = x.n();
  json ms = json::array();
  for (const Matrix& m : x.x) ms.push_back(flat(m));
  j["matrices"] = ms;
  return j;
}

MatrixTuple tuple_from_json(const json& doc) {
  const int g = int_field(doc, "g");
  const int n = int_field(doc, "n");
  if (g <= 0) throw ShapeError("tuple: arity must be positive");
  if (n <= 0) throw ShapeError("tuple: order must be positive");
  return MatrixTuple(square_list(doc, g, n, "tuple"));
}

json to_json(const DropDescription& drop) {
  json j = json::object();
  j["A"] = to_json(drop.a);
  if (drop.h() > 0) j["B"] = to_json(drop.b);
  return j;
}

DropDescription drop_from_json(const json& doc) {
  DropDescription drop;
  drop.a = pencil_from_json(field(doc, "A"));
  if (doc.contains("B") && !doc.at("B").is_null()) {
    drop.b = pencil_from_json(doc.at("B"));
    if (drop.b.g() > 0 && drop.b.d() != drop.a.d())
      throw ShapeError("drop: A and B must share one matrix order");
  }
  if (drop.a.g() == 0) throw ShapeError("drop: A must be nonempty");
  return drop;
}

json to_json(const TruncatedCompactPencil& p) {
  json j = json::object();
  j["g"] = p.g();
  j["N"] = p.truncation;
  j["tail_bound"] = p.tail_bound;
  if (!p.generator.empty()) {
    j["type"] = p.generator;
    j["lambda_rule"] = p.lambda_rule;
    j["w_rule"] = p.w_rule;
  }
  json ms = json::array();
  for (const Matrix& m : p.head) ms.push_back(flat(m));
  j["matrices"] = ms;
  return j;
}

TruncatedCompactPencil generalized_from_json(const json& doc) {
  if (doc.contains("type") && !doc.contains("matrices")) {
    // structured generator: the head is regenerated from the named rules
    const std::string type = string_field(doc, "type");
    if (type != "diag_plus_shift")
      throw DomainError("unknown compact generator type: " + type);
    const std::string lam = string_field(doc, "lambda_rule");
    const std::string w = string_field(doc, "w_rule");
    const int order = int_field(doc, "N");
    TruncatedCompactPencil p = notadrop_example(order);
    if (lam != p.lambda_rule || w != p.w_rule)
      throw DomainError("unsupported generator rules: " + lam + ", " + w);
    return p;
  }
  TruncatedCompactPencil p;
  p.truncation = int_field(doc, "N");
  const int g = int_field(doc, "g");
  if (p.truncation <= 0) throw ShapeError("truncated pencil: N must be positive");
  if (g <= 0) throw ShapeError("truncated pencil: arity must be positive");
  p.tail_bound = real_field(doc, "tail_bound");
  if (!(p.tail_bound >= 0.0)) fail("truncated pencil: tail_bound must be nonnegative");
  p.head = square_list(doc, g, p.truncation, "truncated pencil");
  if (doc.contains("type")) {
    p.generator = string_field(doc, "type");
    p.lambda_rule = string_field(doc, "lambda_rule");
    p.w_rule = string_field(doc, "w_rule");
  }
  return p;
}

SetDescription set_from_json(const json& doc) {
  if (!doc.is_object()) fail("set description must be a JSON object");
  SetDescription out;
  if (doc.contains("kind")) {
    const std::string kind = string_field(doc, "kind");
    if (kind == "spectrahedron") {
      out.kind = SetKind::Spectrahedron;
      out.drop.a = pencil_from_json(field(doc, "pencil"));
    } else if (kind == "drop") {
      out.kind = SetKind::Drop;
      out.drop = drop_from_json(doc);
    } else if (kind == "generalized") {
      out.kind = SetKind::Generalized;
      out.gen = generalized_from_json(doc);
    } else {
      fail("unknown set kind: " + kind);
    }
    return out;
  }
  if (doc.contains("A")) {
    out.drop = drop_from_json(doc);
    out.kind = out.drop.h() > 0 ? SetKind::Drop : SetKind::Spectrahedron;
    return out;
  }
  if (doc.contains("type") || doc.contains("tail_bound")) {
    out.kind = SetKind::Generalized;
    out.gen = generalized_from_json(doc);
    return out;
  }
  if (doc.contains("matrices")) {
    out.kind = SetKind::Spectrahedron;
    out.drop.a = pencil_from_json(doc);
    return out;
  }
  fail("unrecognized set description: expected a pencil, a drop, or a truncated compact pencil");
}

json to_json(const SetDescription& set) {
  json j = json::object();
  switch (set.kind) {
    case SetKind::Spectrahedron:
      j["kind"] = "spectrahedron";
      j["pencil"] = to_json(set.drop.a);
      break;
    case SetKind::Drop: {
      j["kind"] = "drop";
      const json d = to_json(set.drop);
      for (auto it = d.begin(); it != d.end(); ++it) j[it.key()] = it.value();
      break;
    }
    case SetKind::Generalized: {
      j["kind"] = "generalized";
      const json g = to_json(set.gen);
      for (auto it = g.begin(); it != g.end(); ++it) j[it.key()] = it.value();
      break;
    }
  }
  return j;
}

json certificate_to_json(const DecompositionCertificate& cert,
                         const SetDescription& set,
                         const CertificateLimits& limits) {
  return core_certificate_json(cert, set, limits);
}

json certificate_to_json(const GeneralizedDecomposition& out,
                         const CertificateLimits& limits) {
  SetDescription set;
  set.kind = SetKind::Generalized;
  set.gen = out.pencil_used;
  json j = core_certificate_json(out.cert, set, limits);
  json s = json::object();
  s["truncation"] = out.pencil_used.truncation;
  s["tail_bound"] = out.pencil_used.tail_bound;
  s["shrink"] = out.shrink;
  s["tail_budget"] = out.tail_budget;
  json v = json::object();
  v["certainty"] = certainty_name(out.input_verdict.certainty);
  v["lower_margin"] = out.input_verdict.lower_margin;
  v["upper_margin"] = out.input_verdict.upper_margin;
  v["tail_term"] = out.input_verdict.tail_term;
  v["truncation"] = out.input_verdict.truncation;
  s["input_verdict"] = v;
  j["surrogate"] = s;
  return j;
}

VerifyReport verify_certificate(const json& cert) {
  if (!cert.is_object() || !cert.contains("kind") ||
      cert.at("kind") != "decomposition_certificate")
    fail("not a decomposition certificate");

  const SetDescription set = set_from_json(field(cert, "set"));
  const MatrixTuple input = tuple_from_json(field(cert, "input"));
  const CertificateLimits limits = limits_from_json(field(cert, "limits"));

  const json& comp_doc = field(cert, "components");
  const json& iso_doc = field(cert, "isometries");
  if (!comp_doc.is_array() || !iso_doc.is_array())
    fail("components and isometries must be arrays");
  if (comp_doc.empty() || comp_doc.size() != iso_doc.size())
    fail("components and isometries must be nonempty lists of equal length");

  std::vector<MatrixTuple> components;
  for (const json& c : comp_doc) components.push_back(tuple_from_json(c));
  std::vector<Matrix> isometries;
  for (const json& v : iso_doc) isometries.push_back(matrix_from_json(v));

  const int n = input.n();
  const int g = input.g();
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (components[i].g() != g)
      throw ShapeError("certificate: component arity differs from the input");
    if (isometries[i].cols() != n || isometries[i].rows() != components[i].n())
      throw ShapeError("certificate: isometry shape does not match its component");
  }

  VerifyReport report;
  report.pass = true;
  auto record = [&](const std::string& name, bool pass, double value, double limit,
                    const std::string& detail) {
    report.checks.push_back({name, pass, value, limit});
    if (!pass && report.first_failure.empty()) {
      report.pass = false;
      report.first_failure = detail.empty() ? name : name + " (" + detail + ")";
    }
  };

  // partition of identity over the stored isometries
  Matrix p = Matrix::Zero(n, n);
  for (const Matrix& v : isometries) p += v.transpose() * v;
  const double partition = (p - Matrix::Identity(n, n)).norm();
  record("partition residual", partition <= limits.partition, partition,
         limits.partition, "");

  // every component must lie in the stored set
  double worst_margin = std::numeric_limits<double>::infinity();
  std::string worst_detail;
  for (std::size_t i = 0; i < components.size(); ++i) {
    double margin = 0.0;
    switch (set.kind) {
      case SetKind::Spectrahedron:
        margin = membership(set.drop.a, components[i]).margin;
        break;
      case SetKind::Drop:
        margin = drop_membership(set.drop, components[i]).margin;
        break;
      case SetKind::Generalized:
        margin = generalized_membership(set.gen, components[i]).lower_margin;
        break;
    }
    if (margin < worst_margin) {
      worst_margin = margin;
      worst_detail = "component " + std::to_string(i) + " margin " +
                     std::to_string(margin);
    }
  }
  record("component membership", worst_margin >= -limits.component_membership,
         worst_margin, -limits.component_membership, worst_detail);

  // reconstruction of the input from the compressed components
  MatrixTuple recon = zero_tuple(g, n);
  for (std::size_t i = 0; i < components.size(); ++i)
    for (int l = 0; l < g; ++l)
      recon.x[l] += isometries[i].transpose() * components[i].x[l] * isometries[i];
  MatrixTuple diff = input;
  for (int l = 0; l < g; ++l) diff.x[l] -= recon.x[l];
  const double reconstruction = tuple_norm(diff);
  record("reconstruction residual", reconstruction <= limits.reconstruction,
         reconstruction, limits.reconstruction, "");

  // free extreme components generate a trivial symmetric commutant
  int worst_commutant = 0;
  std::string commutant_detail;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const int dim = static_cast<int>(symmetric_commutant(components[i]).size());
    if (dim > worst_commutant) {
      worst_commutant = dim;
      commutant_detail = "component " + std::to_string(i) + " commutant dimension " +
                         std::to_string(dim);
    }
  }
  record("commutant dimension", worst_commutant == 1,
         static_cast<double>(worst_commutant), 1.0, commutant_detail);

  // total component size obeys the span bound n(g+1)
  int total = 0;
  for (const MatrixTuple& c : components) total += c.n();
  record("size bound", total <= n * (g + 1), static_cast<double>(total),
         static_cast<double>(n * (g + 1)), "");

  // recorded dilation subspace dimensions must strictly decrease
  bool decreasing = true;
  const json& steps = field(cert, "steps");
  if (!steps.is_array()) fail("steps must be an array");
  for (const json& s : steps) {
    if (int_field(s, "dim_after") >= int_field(s, "dim_before")) decreasing = false;
  }
  record("dimension decrease", decreasing, decreasing ? 1.0 : 0.0, 1.0, "");

  return report;
}

}  // namespace fex::io
