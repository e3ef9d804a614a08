#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fex/extremal.hpp"
#include "fex/generalized.hpp"
#include "fex/pencil.hpp"
#include "fex/spectrahedrop.hpp"

// JSON serialization for every artifact the tools exchange: pencils
// {"g","d","matrices":[row-major]}, tuples (same with "n"), drops
// {"A","B"}, truncated compact pencils (structured generator or explicit
// head), decomposition certificates, and verdicts. Readers throw ParseError
// on malformed documents and ShapeError on dimension mismatches; writers
// emit a stable field order so equal inputs give byte-equal artifacts.

namespace fex::io {

using json = nlohmann::ordered_json;

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& doc);
std::string dump(const json& doc);  // canonical 2-space indent + newline

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& doc);

json to_json(const LinearPencil& a);
LinearPencil pencil_from_json(const json& doc);

json to_json(const MatrixTuple& x);
MatrixTuple tuple_from_json(const json& doc);

json to_json(const DropDescription& drop);
DropDescription drop_from_json(const json& doc);

json to_json(const TruncatedCompactPencil& p);
TruncatedCompactPencil generalized_from_json(const json& doc);

// a set file is a plain pencil, a drop {"A","B"}, or a truncated compact
// pencil; the kind is detected from the fields present
enum class SetKind { Spectrahedron, Drop, Generalized };

struct SetDescription {
  SetKind kind = SetKind::Spectrahedron;
  DropDescription drop;        // spectrahedron kind keeps h = 0
  TruncatedCompactPencil gen;  // generalized kind only
};

SetDescription set_from_json(const json& doc);
json to_json(const SetDescription& set);

struct CertificateLimits {
  double reconstruction = 1e-6;
  double partition = 1e-8;
  double component_membership = 1e-7;
};

json certificate_to_json(const DecompositionCertificate& cert,
                         const SetDescription& set,
                         const CertificateLimits& limits);

// generalized runs carry the surrogate bookkeeping as well
json certificate_to_json(const GeneralizedDecomposition& out,
                         const CertificateLimits& limits);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
};

struct VerifyReport {
  bool pass = false;
  std::string first_failure;  // empty when pass
  std::vector<VerifyCheck> checks;
};

// re-derives every finitely checkable claim of a stored certificate:
// partition of identity, reconstruction, per-component set membership,
// commutant dimensions, the span size bound, and strict dimension decrease
VerifyReport verify_certificate(const json& cert);

}  // namespace fex::io
