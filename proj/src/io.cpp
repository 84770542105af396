#include "dhdist/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dhdist {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

struct MmHeader {
    bool coordinate = false;
    MatrixKind kind = MatrixKind::General;
};

MmHeader parse_header(const std::string& line, const std::string& path) {
    std::istringstream ss(line);
    std::string banner, object, format, field, symmetry;
    ss >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket")
        throw InputError(path + ": missing %%MatrixMarket banner");
    if (lower(object) != "matrix")
        throw InputError(path + ": unsupported MatrixMarket object '" + object + "'");
    MmHeader h;
    const std::string fmt = lower(format);
    if (fmt == "coordinate")
        h.coordinate = true;
    else if (fmt != "array")
        throw InputError(path + ": unsupported MatrixMarket format '" + format + "'");
    const std::string fld = lower(field);
    if (fld != "real" && fld != "integer" && fld != "double")
        throw InputError(path + ": unsupported MatrixMarket field '" + field + "'");
    const std::string sym = lower(symmetry);
    if (sym == "general")
        h.kind = MatrixKind::General;
    else if (sym == "symmetric")
        h.kind = MatrixKind::Symmetric;
    else if (sym == "skew-symmetric")
        h.kind = MatrixKind::SkewSymmetric;
    else
        throw InputError(path + ": unsupported MatrixMarket symmetry '" + symmetry + "'");
    return h;
}

bool next_data_line(std::istream& in, std::string& out) {
    while (std::getline(in, out)) {
        size_t i = out.find_first_not_of(" \t\r\n");
        if (i == std::string::npos) continue;
        if (out[i] == '%') continue;
        return true;
    }
    return false;
}

} // namespace

void write_matrix_market(const std::string& path, const Matrix& m, MatrixKind kind) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    const Index rows = m.rows(), cols = m.cols();
    const char* sym = kind == MatrixKind::General
                          ? "general"
                          : (kind == MatrixKind::Symmetric ? "symmetric" : "skew-symmetric");
    out << "%%MatrixMarket matrix array real " << sym << "\n";
    out << rows << " " << cols << "\n";
    if (kind == MatrixKind::General) {
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) out << fmt17(m(i, j)) << "\n";
    } else if (kind == MatrixKind::Symmetric) {
        for (Index j = 0; j < cols; ++j)
            for (Index i = j; i < rows; ++i) out << fmt17(m(i, j)) << "\n";
    } else {
        for (Index j = 0; j < cols; ++j)
            for (Index i = j + 1; i < rows; ++i) out << fmt17(m(i, j)) << "\n";
    }
    if (!out) throw InputError("write failure on '" + path + "'");
}

Matrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw InputError(path + ": empty file");
    const MmHeader h = parse_header(line, path);

    if (!next_data_line(in, line)) throw InputError(path + ": missing size line");
    std::istringstream size_ss(line);
    Index rows = 0, cols = 0;
    long long nnz = 0;
    if (h.coordinate) {
        if (!(size_ss >> rows >> cols >> nnz))
            throw InputError(path + ": malformed coordinate size line");
    } else {
        if (!(size_ss >> rows >> cols)) throw InputError(path + ": malformed array size line");
    }
    if (rows <= 0 || cols <= 0 || rows != cols)
        throw InputError(path + ": expected a square matrix, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));

    Matrix m = Matrix::Zero(rows, cols);
    if (h.coordinate) {
        for (long long k = 0; k < nnz; ++k) {
            if (!next_data_line(in, line))
                throw InputError(path + ": truncated coordinate data (expected " +
                                 std::to_string(nnz) + " entries)");
            std::istringstream es(line);
            Index i = 0, j = 0;
            double v = 0.0;
            if (!(es >> i >> j >> v)) throw InputError(path + ": malformed coordinate entry");
            if (i < 1 || i > rows || j < 1 || j > cols)
                throw InputError(path + ": coordinate entry out of range");
            m(i - 1, j - 1) = v;
            if (h.kind == MatrixKind::Symmetric && i != j) m(j - 1, i - 1) = v;
            if (h.kind == MatrixKind::SkewSymmetric && i != j) m(j - 1, i - 1) = -v;
        }
    } else {
        auto read_value = [&](double& v) {
            if (!next_data_line(in, line)) return false;
            std::istringstream es(line);
            return static_cast<bool>(es >> v);
        };
        double v = 0.0;
        if (h.kind == MatrixKind::General) {
            for (Index j = 0; j < cols; ++j)
                for (Index i = 0; i < rows; ++i) {
                    if (!read_value(v)) throw InputError(path + ": truncated array data");
                    m(i, j) = v;
                }
        } else if (h.kind == MatrixKind::Symmetric) {
            for (Index j = 0; j < cols; ++j)
                for (Index i = j; i < rows; ++i) {
                    if (!read_value(v)) throw InputError(path + ": truncated array data");
                    m(i, j) = v;
                    m(j, i) = v;
                }
        } else {
            for (Index j = 0; j < cols; ++j)
                for (Index i = j + 1; i < rows; ++i) {
                    if (!read_value(v)) throw InputError(path + ": truncated array data");
                    m(i, j) = v;
                    m(j, i) = -v;
                }
        }
    }
    return m;
}

DHPencil read_pencil(const std::string& path_e, const std::string& path_j,
                     const std::string& path_r) {
    const Matrix e = read_matrix_market(path_e);
    const Matrix j = read_matrix_market(path_j);
    const Matrix r = read_matrix_market(path_r);
    if (e.rows() != j.rows() || e.rows() != r.rows())
        throw InputError("pencil matrices have mismatched dimensions");
    // Structural validation (exact symmetry of the files) happens in
    // validate(); here the structure projections are exact no-ops for
    // files written with the symmetric/skew qualifiers.
    return DHPencil(SymMatrix::project(e), SkewMatrix::project(j), SymMatrix::project(r));
}

void write_pencil(const DHPencil& p, const std::string& path_e, const std::string& path_j,
                  const std::string& path_r) {
    write_matrix_market(path_e, p.E.mat(), MatrixKind::Symmetric);
    write_matrix_market(path_j, p.J.mat(), MatrixKind::SkewSymmetric);
    write_matrix_market(path_r, p.R.mat(), MatrixKind::Symmetric);
}

namespace {

nlohmann::json vector_json(const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

} // namespace

nlohmann::json validation_report_json(const ValidationReport& rep, const std::string& timestamp) {
    nlohmann::json j;
    j["schema"] = "dh-distance/1";
    j["kind"] = "validation";
    if (!timestamp.empty()) j["timestamp"] = timestamp;
    j["is_symmetric_E"] = rep.is_symmetric_E;
    j["is_symmetric_R"] = rep.is_symmetric_R;
    j["is_skew_J"] = rep.is_skew_J;
    j["min_eig_E"] = rep.min_eig_E;
    j["min_eig_R"] = rep.min_eig_R;
    j["psd_ok_E"] = rep.psd_ok_E;
    j["psd_ok_R"] = rep.psd_ok_R;
    j["is_regular"] = rep.is_regular;
    j["common_kernel_dim"] = rep.common_kernel_dim;
    return j;
}

nlohmann::json bounds_json(const DHPencil& p, const std::string& timestamp) {
    nlohmann::json j;
    j["schema"] = "dh-distance/1";
    j["kind"] = "bounds";
    if (!timestamp.empty()) j["timestamp"] = timestamp;
    const auto sing = singularity_bounds(p);
    const auto inst = instability_bounds(p);
    j["singularity"] = {{"lower", sing.first}, {"upper", sing.second}};
    j["instability"] = {{"lower", inst.first}, {"upper", inst.second}};
    return j;
}

nlohmann::json distance_result_json(const DistanceResult& res, const OuterConfig& cfg,
                                    const std::string& timestamp) {
    nlohmann::json j;
    j["schema"] = "dh-distance/1";
    j["kind"] = "distance";
    if (!timestamp.empty()) j["timestamp"] = timestamp;
    j["target"] = (cfg.target == Target::Singularity) ? "singularity" : "instability";
    j["variant"] = cfg.rank2 ? "rank2" : "full";
    j["functional"] = cfg.unified ? "unified" : "standard";
    j["eps_star"] = res.eps_star;
    j["bracket"] = {res.eps_lb, res.eps_ub};
    j["converged"] = res.converged;
    j["f_at_eps_star"] = res.f_at_ub;
    j["certificate"] = res.certificate;
    j["theorem_bounds"] = {res.theorem_lower, res.theorem_upper};
    j["null_vector"] = vector_json(res.null_vector);
    j["null_residuals"] = {res.residual_E, res.residual_R, res.residual_J};
    j["inner_solves"] = res.inner_solves;
    j["bisection_iterations"] = res.bisection_iterations;
    j["perturbation"] = {{"Delta", matrix_json(res.pert_star.Delta)},
                         {"Theta", matrix_json(res.pert_star.Theta)},
                         {"Gamma", matrix_json(res.pert_star.Gamma)}};
    if (res.has_rank2) {
        j["rank2_factors"] = {{"U1", matrix_json(res.triple_star.D1.U)},
                              {"S1", matrix_json(res.triple_star.D1.S)},
                              {"U2", matrix_json(res.triple_star.D2.U)},
                              {"S2", matrix_json(res.triple_star.D2.S)},
                              {"U3", matrix_json(res.triple_star.D3.U)},
                              {"s3_12", res.triple_star.D3.s12}};
    }
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : res.f_samples) samples.push_back({s.first, s.second});
    j["f_samples"] = samples;
    nlohmann::json cfg_j;
    cfg_j["tol"] = cfg.tol;
    cfg_j["tol_eps"] = cfg.tol_eps;
    cfg_j["k_max"] = cfg.k_max;
    cfg_j["restarts"] = cfg.restarts;
    cfg_j["seed"] = cfg.seed;
    j["config"] = cfg_j;
    return j;
}

std::string curve_csv(const std::vector<std::pair<double, double>>& samples) {
    std::string out = "epsilon,f_value\n";
    for (const auto& s : samples) {
        out += fmt17(s.first);
        out += ",";
        out += fmt17(s.second);
        out += "\n";
    }
    return out;
}

} // namespace dhdist
