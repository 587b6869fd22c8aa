#include "rejsamp/population.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rejsamp/errors.hpp"
#include "rejsamp/rng.hpp"

namespace rejsamp {

double FinitePopulation::y_mean() const {
    if (!y_observed || y.size() == 0)
        throw EstimationError("population y is unobserved");
    return y.mean();
}

void FinitePopulation::validate() const {
    const int n = n_units();
    if (n < 1) throw ConfigError("population: no units");
    if (y_observed && y.size() != n)
        throw ConfigError("population: y length does not match N");
    if (z.cols() > 0 && z.rows() != n)
        throw ConfigError("population: z rows do not match N");
    if (!unit_ids.empty() && static_cast<int>(unit_ids.size()) != n)
        throw ConfigError("population: unit_ids length does not match N");
    if (!x.allFinite()) throw ConfigError("population: non-finite value in x");
    if (z.cols() > 0 && !z.allFinite()) throw ConfigError("population: non-finite value in z");
    if (y_observed && y.size() > 0 && !y.allFinite())
        throw ConfigError("population: non-finite value in y");
}

FinitePopulation generate_synthetic(std::uint64_t seed, int n_units, double beta,
                                    double noise_sd) {
    if (n_units < 2) throw ConfigError("generate_synthetic: n_units must be >= 2");
    if (!(noise_sd > 0.0)) throw ConfigError("generate_synthetic: noise_sd must be > 0");

    RandomStream rng(seed);
    FinitePopulation pop;
    pop.x.resize(n_units, 1);
    pop.y.resize(n_units);
    const double root_half = std::sqrt(0.5);
    for (int i = 0; i < n_units; ++i) {
        double zchi = rng.normal();
        double xi = root_half * (zchi * zchi - 1.0);  // chisq_1 as a squared normal
        pop.x(i, 0) = xi;
        pop.y(i) = 1.0 + beta * xi + noise_sd * rng.normal();
    }
    pop.x_names = {"x1"};
    pop.validate();
    return pop;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

double parse_cell(const std::string& cell, long row, const std::string& col) {
    std::string t = trim(cell);
    if (t.empty())
        throw ParseError("blank cell in column '" + col + "' at data row " +
                         std::to_string(row));
    try {
        std::size_t used = 0;
        double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ParseError("non-numeric cell '" + t + "' in column '" + col +
                         "' at data row " + std::to_string(row));
    }
}

}  // namespace

FinitePopulation load_population(const std::string& path, const ColumnSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open frame file: " + path);
    if (schema.x_cols.empty()) throw SchemaError("schema must name at least one x column");

    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty frame file: " + path);

    char delim = schema.delimiter;
    if (delim == 0)
        delim = header.find('\t') != std::string::npos ? '\t' : ',';

    std::vector<std::string> names = split_line(header, delim);
    for (auto& n : names) n = trim(n);

    auto column_index = [&](const std::string& name) {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return static_cast<int>(k);
        throw SchemaError("column '" + name + "' not found in header of " + path);
    };

    std::vector<int> xi, zi;
    for (const auto& c : schema.x_cols) xi.push_back(column_index(c));
    for (const auto& c : schema.z_cols) zi.push_back(column_index(c));
    int yi = -1;
    if (schema.y_col) yi = column_index(*schema.y_col);
    int id_idx = -1;
    for (std::size_t k = 0; k < names.size(); ++k)
        if (names[k] == "id") id_idx = static_cast<int>(k);

    std::vector<std::vector<double>> xrows, zrows;
    std::vector<double> yvals;
    std::vector<std::string> ids;
    std::string line;
    long row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        auto cells = split_line(line, delim);
        if (cells.size() != names.size())
            throw ParseError("row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(names.size()));
        std::vector<double> xr, zr;
        for (std::size_t k = 0; k < xi.size(); ++k)
            xr.push_back(parse_cell(cells[xi[k]], row, schema.x_cols[k]));
        for (std::size_t k = 0; k < zi.size(); ++k)
            zr.push_back(parse_cell(cells[zi[k]], row, schema.z_cols[k]));
        xrows.push_back(std::move(xr));
        zrows.push_back(std::move(zr));
        if (yi >= 0) yvals.push_back(parse_cell(cells[yi], row, *schema.y_col));
        ids.push_back(id_idx >= 0 ? trim(cells[id_idx]) : std::to_string(row));
    }
    if (row == 0) throw ParseError("frame file has no data rows: " + path);

    FinitePopulation pop;
    const int n = static_cast<int>(row);
    pop.x.resize(n, static_cast<int>(xi.size()));
    for (int i = 0; i < n; ++i)
        for (std::size_t k = 0; k < xi.size(); ++k) pop.x(i, static_cast<int>(k)) = xrows[i][k];
    pop.z.resize(n, static_cast<int>(zi.size()));
    for (int i = 0; i < n; ++i)
        for (std::size_t k = 0; k < zi.size(); ++k) pop.z(i, static_cast<int>(k)) = zrows[i][k];
    if (yi >= 0) {
        pop.y.resize(n);
        for (int i = 0; i < n; ++i) pop.y(i) = yvals[i];
        pop.y_observed = true;
    } else {
        pop.y_observed = false;
    }
    pop.unit_ids = std::move(ids);
    pop.x_names = schema.x_cols;
    pop.z_names = schema.z_cols;
    if (schema.y_col) pop.y_name = *schema.y_col;
    pop.validate();
    return pop;
}

MomentPair population_moments(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
    const long n = u.rows();
    if (n != v.rows()) throw ConfigError("population_moments: row counts differ");
    if (n < 2) throw DegeneratePopulationError("population_moments: need N >= 2");
    MomentPair m;
    m.mean_u = u.colwise().mean();
    m.mean_v = v.colwise().mean();
    Eigen::MatrixXd uc = u.rowwise() - m.mean_u.transpose();
    Eigen::MatrixXd vc = v.rowwise() - m.mean_v.transpose();
    m.cov_uv = (uc.transpose() * vc) / static_cast<double>(n - 1);
    return m;
}

Eigen::MatrixXd stacked_columns(const FinitePopulation& pop, const std::vector<int>& cols) {
    const int n = pop.n_units();
    const int p = pop.p();
    const int q = pop.q();
    Eigen::MatrixXd out(n, static_cast<int>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        int c = cols[k];
        if (c < 0 || c >= p + q + 1)
            throw ConfigError("column selector out of range: " + std::to_string(c));
        if (c < p) {
            out.col(static_cast<int>(k)) = pop.x.col(c);
        } else if (c < p + q) {
            out.col(static_cast<int>(k)) = pop.z.col(c - p);
        } else {
            if (!pop.y_observed) throw EstimationError("selector names y but y is unobserved");
            out.col(static_cast<int>(k)) = pop.y;
        }
    }
    return out;
}

MomentPair population_moments(const FinitePopulation& pop,
                              const std::vector<int>& u_cols,
                              const std::vector<int>& v_cols) {
    return population_moments(stacked_columns(pop, u_cols), stacked_columns(pop, v_cols));
}

}  // namespace rejsamp
