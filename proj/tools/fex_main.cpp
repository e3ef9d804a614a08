#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fex/json_io.hpp"

namespace {

using fex::io::json;

struct Options {
  std::string set_path;
  std::string tuple_path;
  std::string cert_path;
  std::string demo_name;
  std::string out_path;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  int truncation = 0;  // 0 = use the set file's order with adaptive raising
  bool quiet = false;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

void emit(const json& doc, const Options& o) {
  if (o.out_path.empty()) {
    std::cout << fex::io::dump(doc);
  } else {
    fex::io::write_json_file(o.out_path, doc);
    if (!o.quiet) std::cout << "wrote " << o.out_path << "\n";
  }
}

const char* certainty_name(fex::Certainty c) {
  switch (c) {
    case fex::Certainty::CertifiedIn: return "certified_in";
    case fex::Certainty::CertifiedOut: return "certified_out";
    default: return "undecided";
  }
}

const char* boundedness_name(fex::Boundedness b) {
  switch (b) {
    case fex::Boundedness::Bounded: return "bounded";
    case fex::Boundedness::Unbounded: return "unbounded";
    default: return "inconclusive";
  }
}

json witness_to_json(const fex::ViolationWitness& w) {
  json j = json::object();
  j["level"] = w.w.level;
  j["cols"] = w.w.cols;
  j["w"] = fex::io::to_json(w.w.w);
  j["ortho_residual"] = w.w.ortho_residual;
  j["annihilation_residual"] = w.w.annihilation_residual;
  j["violation"] = w.violation;
  return j;
}

json vector_json(const fex::Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// resolve the truncation order to run at: a --truncation-N flag pins the
// order exactly (no adaptive raising); otherwise the file's order is the
// starting point and adaptive doubling is allowed
fex::TruncatedCompactPencil pinned(const fex::TruncatedCompactPencil& p, int flag) {
  if (flag > 0 && flag != p.truncation) return fex::regenerate(p, flag);
  return p;
}

int cmd_membership(const Options& o) {
  const fex::io::SetDescription set =
      fex::io::set_from_json(fex::io::read_json_file(o.set_path));
  const fex::MatrixTuple x =
      fex::io::tuple_from_json(fex::io::read_json_file(o.tuple_path));

  json out = json::object();
  out["kind"] = "membership_verdict";
  out["seed"] = o.seed;
  out["tol"] = o.tol;

  if (set.kind == fex::io::SetKind::Generalized) {
    out["set_kind"] = "generalized";
    fex::TruncatedVerdict v;
    if (o.truncation > 0) {
      v = fex::generalized_membership(pinned(set.gen, o.truncation), x, o.tol);
    } else {
      v = fex::generalized_membership_adaptive(set.gen, x, o.tol).first;
    }
    out["certainty"] = certainty_name(v.certainty);
    out["lower_margin"] = v.lower_margin;
    out["upper_margin"] = v.upper_margin;
    out["tail_term"] = v.tail_term;
    out["truncation"] = v.truncation;
    if (!o.quiet)
      std::cout << "certainty: " << certainty_name(v.certainty) << " (margins ["
                << fmt(v.lower_margin) << ", " << fmt(v.upper_margin)
                << "] at truncation " << v.truncation << ")\n";
    emit(out, o);
    if (v.certainty == fex::Certainty::CertifiedIn) return 0;
    return v.certainty == fex::Certainty::CertifiedOut ? 3 : 4;
  }

  const bool is_drop = set.kind == fex::io::SetKind::Drop;
  out["set_kind"] = is_drop ? "drop" : "spectrahedron";
  const fex::MembershipVerdict v = is_drop
                                       ? fex::drop_membership(set.drop, x, o.tol)
                                       : fex::membership(set.drop.a, x, o.tol);
  out["inside"] = v.inside;
  out["margin"] = v.margin;
  if (!v.inside) {
    if (v.witness.size() > 0) out["eigenvector"] = vector_json(v.witness);
    if (is_drop) {
      if (const auto w = fex::dnt_violating_witness(set.drop, x))
        out["witness"] = witness_to_json(*w);
    }
  }
  if (!o.quiet)
    std::cout << (v.inside ? "inside" : "outside") << " (margin " << fmt(v.margin)
              << ")\n";
  emit(out, o);
  return v.inside ? 0 : 3;
}

void print_certificate_summary(const fex::DecompositionCertificate& cert) {
  std::cout << "dilation steps: " << cert.steps.size() << "\n";
  for (std::size_t s = 0; s < cert.steps.size(); ++s) {
    const fex::DilationStep& st = cert.steps[s];
    std::cout << "  step " << s << ": subspace dim " << st.dim_before << " -> "
              << st.dim_after << ", order " << st.dilated.n()
              << ", alpha residual " << fmt(st.alpha_residual) << "\n";
  }
  std::cout << "components:";
  for (const fex::MatrixTuple& c : cert.components) std::cout << " " << c.n();
  std::cout << " (input order " << cert.input.n() << ", bound "
            << cert.input.n() * (cert.input.g() + 1) << ")\n";
  std::cout << "reconstruction residual " << fmt(cert.reconstruction_residual)
            << ", partition residual " << fmt(cert.partition_residual) << "\n";
}

void require_verifies(const json& cert_doc, const Options& o) {
  const fex::io::VerifyReport r = fex::io::verify_certificate(cert_doc);
  if (!r.pass)
    throw fex::InvariantViolation("emitted certificate failed verification: " +
                                  r.first_failure);
  if (!o.quiet) std::cout << "verify: all checks pass\n";
}

int cmd_decompose(const Options& o) {
  const fex::io::SetDescription set =
      fex::io::set_from_json(fex::io::read_json_file(o.set_path));
  const fex::MatrixTuple x =
      fex::io::tuple_from_json(fex::io::read_json_file(o.tuple_path));

  json out;
  if (set.kind == fex::io::SetKind::Generalized) {
    fex::TruncatedCompactPencil p = set.gen;
    int cap = 128;
    if (o.truncation > 0) {
      p = pinned(p, o.truncation);
      cap = o.truncation;
    }
    const fex::GeneralizedDecomposition g =
        fex::decompose_generalized(p, x, o.seed, o.tol, cap);
    out = fex::io::certificate_to_json(g, {1e-6, 1e-8, 1e-6});
    if (!o.quiet) {
      std::cout << "certified inside at truncation " << g.input_verdict.truncation
                << " (lower margin " << fmt(g.input_verdict.lower_margin)
                << ", shrink " << fmt(g.shrink) << ")\n";
      print_certificate_summary(g.cert);
    }
  } else {
    const fex::MembershipVerdict v =
        set.kind == fex::io::SetKind::Drop
            ? fex::drop_membership(set.drop, x, o.tol)
            : fex::membership(set.drop.a, x, o.tol);
    if (!v.inside)
      throw fex::NotMemberError("input is outside the set (margin " +
                                fmt(v.margin) + ")");
    const double kernel_tol =
        set.kind == fex::io::SetKind::Drop ? 1e-8 : 1e-9;
    const auto oracle = fex::drop_oracle(set.drop, kernel_tol);
    const fex::DecompositionCertificate cert =
        fex::decompose_free_extreme(*oracle, x, o.seed);
    out = fex::io::certificate_to_json(cert, set, {});
    if (!o.quiet) print_certificate_summary(cert);
  }
  require_verifies(out, o);
  emit(out, o);
  return 0;
}

int cmd_verify(const Options& o) {
  const json cert = fex::io::read_json_file(o.cert_path);
  const fex::io::VerifyReport r = fex::io::verify_certificate(cert);

  if (!o.quiet) {
    for (const fex::io::VerifyCheck& c : r.checks)
      std::cout << (c.pass ? "ok   " : "FAIL ") << c.name << " (value "
                << fmt(c.value) << ", limit " << fmt(c.limit) << ")\n";
  }
  std::cout << (r.pass ? "pass" : "fail: " + r.first_failure) << "\n";

  if (!o.out_path.empty()) {
    json out = json::object();
    out["kind"] = "verify_report";
    out["seed"] = cert.contains("seed") ? cert.at("seed") : json();
    out["pass"] = r.pass;
    out["first_failure"] = r.first_failure;
    json checks = json::array();
    for (const fex::io::VerifyCheck& c : r.checks) {
      json cj = json::object();
      cj["name"] = c.name;
      cj["pass"] = c.pass;
      cj["value"] = c.value;
      cj["limit"] = c.limit;
      checks.push_back(cj);
    }
    out["checks"] = checks;
    fex::io::write_json_file(o.out_path, out);
  }
  return r.pass ? 0 : 1;
}

double spectral_norm(const fex::Matrix& m) {
  Eigen::SelfAdjointEigenSolver<fex::Matrix> es(m);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

int demo_interval(const Options& o) {
  const fex::LinearPencil a = fex::interval_pencil();
  fex::io::SetDescription set;
  set.kind = fex::io::SetKind::Spectrahedron;
  set.drop.a = a;

  fex::MatrixTuple x(std::vector<fex::Matrix>{fex::Matrix::Zero(1, 1)});
  const fex::SpectrahedronOracle oracle(a);
  const fex::DecompositionCertificate cert =
      fex::decompose_free_extreme(oracle, x, o.seed);
  const json doc = fex::io::certificate_to_json(cert, set, {});

  if (!o.quiet) {
    std::cout << "the interval [-1, 1] is the free spectrahedron of L(x) = "
                 "diag(1 - x, 1 + x)\n";
    std::cout << "input: the 1x1 zero tuple, an interior point\n";
    print_certificate_summary(cert);
    std::cout << "matrix convex combination:\n  0 =";
    for (std::size_t i = 0; i < cert.components.size(); ++i) {
      const double weight = cert.isometries[i](0, 0) * cert.isometries[i](0, 0);
      std::cout << (i ? " +" : "") << " " << fmt(weight) << " * ("
                << fmt(cert.components[i].x[0](0, 0)) << ")";
    }
    std::cout << "\n";
  }
  require_verifies(doc, o);
  emit(doc, o);
  return 0;
}

int demo_cube(const Options& o) {
  const int g = 2, n = 2;
  const fex::LinearPencil a = fex::cube_pencil(g);
  fex::io::SetDescription set;
  set.kind = fex::io::SetKind::Spectrahedron;
  set.drop.a = a;

  fex::Rng rng(o.seed + 77);
  std::vector<fex::Matrix> xs;
  for (int l = 0; l < g; ++l) {
    fex::Matrix m = rng.symmetric_gaussian(n);
    xs.push_back(m * (0.7 / spectral_norm(m)));
  }
  const fex::MatrixTuple x(xs);

  const fex::SpectrahedronOracle oracle(a);
  const fex::DecompositionCertificate cert =
      fex::decompose_free_extreme(oracle, x, o.seed);
  const json doc = fex::io::certificate_to_json(cert, set, {});

  if (!o.quiet) {
    std::cout << "free cube, g = 2: both coordinates have operator norm <= 1\n";
    std::cout << "input: a random order-2 tuple with coordinate norms 0.7\n";
    print_certificate_summary(cert);
    std::cout << "free extreme points of the cube square to the identity:\n";
    for (std::size_t i = 0; i < cert.components.size(); ++i) {
      double worst = 0.0;
      for (const fex::Matrix& m : cert.components[i].x) {
        const int k = static_cast<int>(m.rows());
        worst = std::max(worst,
                         (m * m - fex::Matrix::Identity(k, k)).norm());
      }
      std::cout << "  component " << i << ": order " << cert.components[i].n()
                << ", max ||X_l^2 - I||_F = " << fmt(worst) << "\n";
    }
  }
  require_verifies(doc, o);
  emit(doc, o);
  return 0;
}

int demo_disc_drop(const Options& o) {
  fex::Matrix a1(2, 2), b1(2, 2);
  a1 << 1, 0, 0, -1;
  b1 << 0, 1, 1, 0;
  fex::io::SetDescription set;
  set.kind = fex::io::SetKind::Drop;
  set.drop.a = fex::LinearPencil({a1});
  set.drop.b = fex::LinearPencil({b1});

  const double c = std::cos(0.9), s = std::sin(0.9);
  fex::Matrix r(2, 2), d(2, 2);
  r << c, -s, s, c;
  d << 0.4, 0, 0, -0.7;
  const fex::Matrix m = r * d * r.transpose();
  const fex::MatrixTuple x(std::vector<fex::Matrix>{0.5 * (m + m.transpose())});

  const auto oracle = fex::drop_oracle(set.drop, 1e-8);
  const fex::DecompositionCertificate cert =
      fex::decompose_free_extreme(*oracle, x, o.seed);
  const json doc = fex::io::certificate_to_json(cert, set, {});

  if (!o.quiet) {
    std::cout << "projection of {(x, y) : I - A x - B y >= 0} onto x with "
                 "A = diag(1, -1), B the swap matrix\n";
    std::cout << "input: an order-2 interior point with eigenvalues 0.4 and "
                 "-0.7\n";
    print_certificate_summary(cert);
  }
  require_verifies(doc, o);
  emit(doc, o);
  return 0;
}

int demo_notadrop(const Options& o) {
  const fex::TruncatedCompactPencil p = fex::notadrop_example(16);

  const fex::BoundednessCertificate bc = fex::compression_boundedness(p);
  const fex::FiniteInteriorWitness fw = fex::finite_interior_witness(p);

  if (!o.quiet) {
    std::cout << "diagonal-plus-weighted-shift pair truncated at order "
              << p.truncation << " (tail bound " << fmt(p.tail_bound) << ")\n";
    std::cout << "boundedness through the leading 2x2 compression: "
              << boundedness_name(bc.report.verdict) << "\n";
    std::cout << "finite interior certificate: v1^T A_l v1 + v2^T A_l v2 "
                 "vanishes, max residual "
              << fmt(fw.residual.cwiseAbs().maxCoeff())
              << " (so 0 is not in the interior of the level-1 projection "
                 "in the usual sense for a drop)\n";
  }

  const fex::MatrixTuple x(std::vector<fex::Matrix>{
      0.3 * fex::Matrix::Identity(1, 1), 0.2 * fex::Matrix::Identity(1, 1)});
  const fex::GeneralizedDecomposition g =
      fex::decompose_generalized(p, x, o.seed);
  json cert_doc = fex::io::certificate_to_json(g, {1e-6, 1e-8, 1e-6});

  if (!o.quiet) {
    std::cout << "decomposing the level-1 point (0.3, 0.2): certified inside "
                 "at truncation "
              << g.input_verdict.truncation << " with lower margin "
              << fmt(g.input_verdict.lower_margin) << "\n";
    print_certificate_summary(g.cert);
  }
  require_verifies(cert_doc, o);

  json doc = json::object();
  doc["kind"] = "notadrop_demo";
  doc["seed"] = o.seed;
  json bj = json::object();
  bj["verdict"] = boundedness_name(bc.report.verdict);
  bj["compression"] = fex::io::to_json(bc.compression);
  bj["trials_used"] = bc.report.trials_used;
  doc["boundedness"] = bj;
  json fj = json::object();
  fj["d"] = fw.d;
  json vs = json::array();
  for (const fex::Vector& v : fw.v) vs.push_back(vector_json(v));
  fj["v"] = vs;
  fj["residual"] = vector_json(fw.residual);
  doc["finite_interior"] = fj;
  doc["decomposition"] = cert_doc;
  emit(doc, o);
  return 0;
}

int cmd_demo(const Options& o) {
  if (o.demo_name == "interval") return demo_interval(o);
  if (o.demo_name == "cube") return demo_cube(o);
  if (o.demo_name == "disc-drop") return demo_disc_drop(o);
  if (o.demo_name == "notadrop") return demo_notadrop(o);
  std::cerr << "error: unknown demo \"" << o.demo_name
            << "\" (expected interval, cube, disc-drop, or notadrop)\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"decomposition of free spectrahedron, spectrahedrop, and "
               "truncated generalized spectrahedron members into matrix "
               "convex combinations of free extreme points"};
  app.require_subcommand(1);

  CLI::App* mem = app.add_subcommand(
      "membership", "certified membership verdict for a tuple in a set");
  mem->add_option("set", o.set_path,
                  "set JSON: pencil {g,d,matrices}, drop {A,B}, or truncated "
                  "compact pencil")
      ->required();
  mem->add_option("tuple", o.tuple_path, "symmetric tuple JSON {g,n,matrices}")
      ->required();

  CLI::App* dec = app.add_subcommand(
      "decompose", "decompose a member into free extreme points");
  dec->add_option("set", o.set_path, "set JSON")->required();
  dec->add_option("tuple", o.tuple_path, "symmetric tuple JSON")->required();

  CLI::App* ver = app.add_subcommand(
      "verify", "re-check every claim of a stored certificate");
  ver->add_option("certificate", o.cert_path, "certificate JSON")->required();

  CLI::App* dem = app.add_subcommand("demo", "end-to-end walkthroughs");
  dem->add_option("name", o.demo_name,
                  "one of: interval, cube, disc-drop, notadrop")
      ->required();

  for (CLI::App* c : {mem, dec}) {
    c->add_option("--tol", o.tol, "membership tolerance")
        ->capture_default_str();
    c->add_option("--truncation-N", o.truncation,
                  "pin the truncation order (generalized sets only)");
  }
  for (CLI::App* c : {dec, dem})
    c->add_option("--seed", o.seed, "deterministic seed recorded in artifacts")
        ->capture_default_str();
  for (CLI::App* c : {mem, dec, ver, dem}) {
    c->add_option("--out", o.out_path, "write the JSON artifact to this file");
    c->add_flag("--quiet", o.quiet, "suppress informational output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (mem->parsed()) return cmd_membership(o);
    if (dec->parsed()) return cmd_decompose(o);
    if (ver->parsed()) return cmd_verify(o);
    return cmd_demo(o);
  } catch (const fex::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fex::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fex::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fex::NotMemberError& e) {
    std::cerr << "not a member: " << e.what() << "\n";
    return 3;
  } catch (const fex::UndecidedError& e) {
    std::cerr << "undecided: " << e.what() << "\n";
    return 4;
  } catch (const fex::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 5;
  } catch (const fex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
}
