#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "dhdist/outer.hpp"

namespace dhdist {

enum class MatrixKind { General, Symmetric, SkewSymmetric };

// Matrix Market dense ("array") writer with 17-significant-digit decimal
// serialization (bitwise round trip through the reader). Symmetric matrices
// store the lower triangle, skew-symmetric ones the strictly lower triangle.
void write_matrix_market(const std::string& path, const Matrix& m, MatrixKind kind);

// Matrix Market reader: accepts array and coordinate formats, real/integer
// fields, and the general/symmetric/skew-symmetric qualifiers. Throws
// InputError with a diagnostic on malformed input.
Matrix read_matrix_market(const std::string& path);

// Pencil-level convenience wrappers (E and R written `symmetric`, J written
// `skew-symmetric`).
DHPencil read_pencil(const std::string& path_e, const std::string& path_j,
                     const std::string& path_r);
void write_pencil(const DHPencil& p, const std::string& path_e, const std::string& path_j,
                  const std::string& path_r);

// JSON emitters (schema "dh-distance/1"). `timestamp` is the one
// intentionally non-reproducible field; callers may pass an empty string to
// get byte-stable output.
nlohmann::json validation_report_json(const ValidationReport& rep, const std::string& timestamp);
nlohmann::json bounds_json(const DHPencil& p, const std::string& timestamp);
nlohmann::json distance_result_json(const DistanceResult& res, const OuterConfig& cfg,
                                    const std::string& timestamp);

// CSV serialization of (eps, f) samples, columns "epsilon,f_value".
std::string curve_csv(const std::vector<std::pair<double, double>>& samples);

} // namespace dhdist
