#pragma once

// Regular north-up grids, ESRI ASCII grid I/O and predictor-layer derivation.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spatialcv/error.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

inline constexpr double kDefaultNodata = -9999.0;

struct GridGeometry {
    std::size_t ncols = 0;
    std::size_t nrows = 0;
    double x_min = 0.0;
    double y_min = 0.0;
    double cell_size = 1.0;

    bool operator==(const GridGeometry&) const = default;
    std::size_t cell_count() const { return ncols * nrows; }
    double x_max() const { return x_min + static_cast<double>(ncols) * cell_size; }
    double y_max() const { return y_min + static_cast<double>(nrows) * cell_size; }
};

struct CellIndex {
    std::size_t row = 0;  // counted from the north edge
    std::size_t col = 0;
    bool operator==(const CellIndex&) const = default;
};

/// Single-band grid, values stored row-major from the north row down.
class RasterGrid {
public:
    RasterGrid() = default;

    RasterGrid(GridGeometry geometry, double nodata = kDefaultNodata)
        : geometry_(geometry), nodata_(nodata), values_(geometry.cell_count(), nodata) {
        validate_geometry();
    }

    RasterGrid(GridGeometry geometry, std::vector<double> values, double nodata = kDefaultNodata)
        : geometry_(geometry), nodata_(nodata), values_(std::move(values)) {
        validate_geometry();
        if (values_.size() != geometry_.cell_count()) {
            throw FormatError("grid has " + std::to_string(values_.size()) + " values, expected " +
                              std::to_string(geometry_.cell_count()));
        }
        for (double& v : values_) {
            if (!std::isfinite(v)) v = nodata_;
        }
    }

    const GridGeometry& geometry() const { return geometry_; }
    std::size_t ncols() const { return geometry_.ncols; }
    std::size_t nrows() const { return geometry_.nrows; }
    double x_min() const { return geometry_.x_min; }
    double y_min() const { return geometry_.y_min; }
    double cell_size() const { return geometry_.cell_size; }
    double nodata() const { return nodata_; }
    std::size_t size() const { return values_.size(); }

    const std::vector<double>& values() const { return values_; }

    double operator()(std::size_t row, std::size_t col) const { return values_[row * ncols() + col]; }
    double& operator()(std::size_t row, std::size_t col) { return values_[row * ncols() + col]; }
    double at(std::size_t index) const { return values_[index]; }

    bool is_nodata(double v) const { return v == nodata_ || !std::isfinite(v); }
    bool is_nodata(std::size_t row, std::size_t col) const { return is_nodata((*this)(row, col)); }

    /// Stores `v`, mapping non-finite values to NODATA.
    void set(std::size_t row, std::size_t col, double v) {
        (*this)(row, col) = std::isfinite(v) ? v : nodata_;
    }

    /// Cell owning the point under half-open cell intervals, or nullopt when
    /// the point lies outside [x_min, x_max) x [y_min, y_max).
    std::optional<CellIndex> locate(double x, double y) const {
        const double cx = std::floor((x - x_min()) / cell_size());
        const double cy = std::floor((y - y_min()) / cell_size());
        if (!(cx >= 0.0 && cy >= 0.0 && cx < static_cast<double>(ncols()) &&
              cy < static_cast<double>(nrows()))) {
            return std::nullopt;
        }
        const auto col = static_cast<std::size_t>(cx);
        const auto row_from_south = static_cast<std::size_t>(cy);
        return CellIndex{nrows() - 1 - row_from_south, col};
    }

    double center_x(std::size_t col) const {
        return x_min() + (static_cast<double>(col) + 0.5) * cell_size();
    }
    double center_y(std::size_t row) const {
        return y_min() + (static_cast<double>(nrows() - row) - 0.5) * cell_size();
    }

private:
    void validate_geometry() const {
        if (geometry_.ncols == 0 || geometry_.nrows == 0) throw FormatError("grid dimensions must be positive");
        if (!(geometry_.cell_size > 0.0) || !std::isfinite(geometry_.cell_size))
            throw FormatError("cell size must be positive");
        if (!std::isfinite(geometry_.x_min) || !std::isfinite(geometry_.y_min))
            throw FormatError("grid origin must be finite");
    }

    GridGeometry geometry_{};
    double nodata_ = kDefaultNodata;
    std::vector<double> values_;
};

/// Co-registered bands addressed by unique name.
class RasterStack {
public:
    struct Band {
        std::string name;
        RasterGrid grid;
    };

    RasterStack() = default;

    void add(std::string name, RasterGrid grid) {
        if (name.empty()) throw ValidationError("band name must be non-empty");
        if (find(name)) throw ValidationError("duplicate band name '" + name + "'");
        if (!bands_.empty() && !(grid.geometry() == bands_.front().grid.geometry()))
            throw ValidationError("band '" + name + "' does not share the stack geometry");
        bands_.push_back({std::move(name), std::move(grid)});
    }

    std::size_t size() const { return bands_.size(); }
    bool empty() const { return bands_.empty(); }
    const std::vector<Band>& bands() const { return bands_; }
    const GridGeometry& geometry() const { return bands_.at(0).grid.geometry(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& b : bands_) out.push_back(b.name);
        return out;
    }

    const RasterGrid* find(std::string_view name) const {
        for (const auto& b : bands_)
            if (b.name == name) return &b.grid;
        return nullptr;
    }

    const RasterGrid& band(std::string_view name) const {
        if (const auto* g = find(name)) return *g;
        throw FeatureMismatchError("stack has no band named '" + std::string(name) + "'");
    }

private:
    std::vector<Band> bands_;
};

// ---------------------------------------------------------------------------
// ESRI ASCII grid

inline RasterGrid parse_ascii_grid(std::string_view text) {
    struct Token {
        std::string_view text;
        std::size_t line;
    };
    std::vector<Token> tokens;
    {
        std::size_t line = 1;
        std::size_t i = 0;
        while (i < text.size()) {
            const char c = text[i];
            if (c == '\n') {
                ++line;
                ++i;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++i;
            } else {
                const std::size_t start = i;
                while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
                tokens.push_back({text.substr(start, i - start), line});
            }
        }
    }

    auto number = [&](const Token& t) {
        if (auto v = parse_double(t.text)) return *v;
        throw ParseError("unparsable token '" + std::string(t.text) + "' at line " + std::to_string(t.line));
    };

    std::optional<double> ncols, nrows, xll, yll, cellsize;
    bool x_center = false, y_center = false;
    double nodata = kDefaultNodata;
    std::size_t pos = 0;
    while (pos + 1 < tokens.size()) {
        const std::string key = to_lower(tokens[pos].text);
        if (key.empty() || !std::isalpha(static_cast<unsigned char>(key[0]))) break;
        const double value = number(tokens[pos + 1]);
        if (key == "ncols") ncols = value;
        else if (key == "nrows") nrows = value;
        else if (key == "xllcorner") xll = value;
        else if (key == "yllcorner") yll = value;
        else if (key == "xllcenter") { xll = value; x_center = true; }
        else if (key == "yllcenter") { yll = value; y_center = true; }
        else if (key == "cellsize") cellsize = value;
        else if (key == "nodata_value") nodata = value;
        else throw FormatError("unknown header key '" + std::string(tokens[pos].text) + "' at line " +
                               std::to_string(tokens[pos].line));
        pos += 2;
    }
    const char* missing = !ncols ? "ncols" : !nrows ? "nrows" : !xll ? "xllcorner" : !yll ? "yllcorner"
                        : !cellsize ? "cellsize" : nullptr;
    if (missing) throw FormatError(std::string("missing header key ") + missing);
    if (*ncols < 1 || *nrows < 1 || *ncols != std::floor(*ncols) || *nrows != std::floor(*nrows))
        throw FormatError("ncols and nrows must be positive integers");

    GridGeometry geometry{static_cast<std::size_t>(*ncols), static_cast<std::size_t>(*nrows), *xll, *yll, *cellsize};
    if (x_center) geometry.x_min -= 0.5 * *cellsize;
    if (y_center) geometry.y_min -= 0.5 * *cellsize;

    const std::size_t expected = geometry.cell_count();
    if (tokens.size() - pos != expected) {
        throw FormatError("grid body has " + std::to_string(tokens.size() - pos) + " values, header declares " +
                          std::to_string(expected));
    }
    std::vector<double> values;
    values.reserve(expected);
    for (; pos < tokens.size(); ++pos) values.push_back(number(tokens[pos]));
    return RasterGrid(geometry, std::move(values), nodata);
}

inline RasterGrid read_ascii_grid(const std::filesystem::path& path) {
    return parse_ascii_grid(read_text_file(path));
}

inline std::string format_ascii_grid(const RasterGrid& grid) {
    std::string out;
    out += "ncols " + std::to_string(grid.ncols()) + "\n";
    out += "nrows " + std::to_string(grid.nrows()) + "\n";
    out += "xllcorner " + format_double(grid.x_min()) + "\n";
    out += "yllcorner " + format_double(grid.y_min()) + "\n";
    out += "cellsize " + format_double(grid.cell_size()) + "\n";
    out += "NODATA_value " + format_double(grid.nodata()) + "\n";
    for (std::size_t r = 0; r < grid.nrows(); ++r) {
        for (std::size_t c = 0; c < grid.ncols(); ++c) {
            if (c) out += ' ';
            out += format_double(grid(r, c));
        }
        out += '\n';
    }
    return out;
}

inline void write_ascii_grid(const RasterGrid& grid, const std::filesystem::path& path) {
    write_text_file(path, format_ascii_grid(grid));
}

/// Reads "band_name = path.asc" lines; relative paths resolve against the
/// manifest's directory.
inline RasterStack read_stack_manifest(const std::filesystem::path& path) {
    RasterStack stack;
    const auto base = path.parent_path();
    for (const auto& [line_no, key, value] : parse_key_value_lines(read_text_file(path))) {
        std::filesystem::path band_path(value);
        if (band_path.is_relative()) band_path = base / band_path;
        try {
            stack.add(key, read_ascii_grid(band_path));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (stack.empty()) throw FormatError("stack manifest " + path.string() + " lists no bands");
    return stack;
}

/// Writes every band as <dir>/<name>.asc plus a manifest naming them.
inline void write_stack(const RasterStack& stack, const std::filesystem::path& dir,
                        const std::string& manifest_name = "stack.txt") {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (const auto& band : stack.bands()) {
        write_ascii_grid(band.grid, dir / (band.name + ".asc"));
        manifest += band.name + " = " + band.name + ".asc\n";
    }
    write_text_file(dir / manifest_name, manifest);
}

// ---------------------------------------------------------------------------
// Band math

namespace detail {

struct ExprNode {
    enum class Kind { number, band, negate, add, sub, mul, div } kind;
    double value = 0.0;
    std::size_t band = 0;
    std::unique_ptr<ExprNode> lhs, rhs;
};

class ExprParser {
public:
    ExprParser(std::string_view text, const RasterStack& stack) : text_(text), stack_(stack) {}

    std::unique_ptr<ExprNode> parse() {
        auto node = parse_sum();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected character");
        return node;
    }

    const std::vector<const RasterGrid*>& bands() const { return bands_; }

private:
    std::string where() const { return " at offset " + std::to_string(pos_) + " in '" + std::string(text_) + "'"; }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg + where()); }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static std::unique_ptr<ExprNode> binary(ExprNode::Kind kind, std::unique_ptr<ExprNode> l,
                                            std::unique_ptr<ExprNode> r) {
        auto n = std::make_unique<ExprNode>();
        n->kind = kind;
        n->lhs = std::move(l);
        n->rhs = std::move(r);
        return n;
    }

    std::unique_ptr<ExprNode> parse_sum() {
        auto node = parse_product();
        for (;;) {
            if (accept('+')) node = binary(ExprNode::Kind::add, std::move(node), parse_product());
            else if (accept('-')) node = binary(ExprNode::Kind::sub, std::move(node), parse_product());
            else return node;
        }
    }

    std::unique_ptr<ExprNode> parse_product() {
        auto node = parse_unary();
        for (;;) {
            if (accept('*')) node = binary(ExprNode::Kind::mul, std::move(node), parse_unary());
            else if (accept('/')) node = binary(ExprNode::Kind::div, std::move(node), parse_unary());
            else return node;
        }
    }

    std::unique_ptr<ExprNode> parse_unary() {
        if (accept('-')) {
            auto n = std::make_unique<ExprNode>();
            n->kind = ExprNode::Kind::negate;
            n->lhs = parse_unary();
            return n;
        }
        if (accept('+')) return parse_unary();
        return parse_primary();
    }

    std::unique_ptr<ExprNode> parse_primary() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        if (accept('(')) {
            auto node = parse_sum();
            if (!accept(')')) fail("expected ')'");
            return node;
        }
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
                ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
                ++pos_;
                if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            }
            const auto value = parse_double(text_.substr(start, pos_ - start));
            if (!value) {
                pos_ = start;
                fail("malformed number");
            }
            auto n = std::make_unique<ExprNode>();
            n->kind = ExprNode::Kind::number;
            n->value = *value;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            const std::string name(text_.substr(start, pos_ - start));
            const RasterGrid* grid = stack_.find(name);
            if (!grid) {
                pos_ = start;
                throw ExpressionError("unknown band '" + name + "'" + where());
            }
            auto n = std::make_unique<ExprNode>();
            n->kind = ExprNode::Kind::band;
            n->band = bands_.size();
            bands_.push_back(grid);
            return n;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view text_;
    const RasterStack& stack_;
    std::size_t pos_ = 0;
    std::vector<const RasterGrid*> bands_;
};

// NaN marks NODATA and division by zero while evaluating.
inline double evaluate(const ExprNode& n, const std::vector<double>& inputs) {
    switch (n.kind) {
        case ExprNode::Kind::number: return n.value;
        case ExprNode::Kind::band: return inputs[n.band];
        case ExprNode::Kind::negate: return -evaluate(*n.lhs, inputs);
        case ExprNode::Kind::add: return evaluate(*n.lhs, inputs) + evaluate(*n.rhs, inputs);
        case ExprNode::Kind::sub: return evaluate(*n.lhs, inputs) - evaluate(*n.rhs, inputs);
        case ExprNode::Kind::mul: return evaluate(*n.lhs, inputs) * evaluate(*n.rhs, inputs);
        case ExprNode::Kind::div: {
            const double num = evaluate(*n.lhs, inputs);
            const double den = evaluate(*n.rhs, inputs);
            if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
            return num / den;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Evaluates an arithmetic expression over band names cell by cell. Cells
/// with NODATA inputs or a zero divisor become NODATA.
inline RasterGrid band_math(const RasterStack& stack, std::string_view expression) {
    if (stack.empty()) throw ExpressionError("band math needs a non-empty stack");
    detail::ExprParser parser(expression, stack);
    const auto root = parser.parse();
    const auto& inputs = parser.bands();

    RasterGrid out(stack.geometry());
    std::vector<double> cell(inputs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool valid = true;
        for (std::size_t b = 0; b < inputs.size(); ++b) {
            cell[b] = inputs[b]->at(i);
            if (inputs[b]->is_nodata(cell[b])) valid = false;
        }
        if (!valid) continue;
        const double v = detail::evaluate(*root, cell);
        out.set(i / out.ncols(), i % out.ncols(), v);
    }
    return out;
}

struct NamedExpression {
    std::string name;
    std::string expression;
};

/// Parses "name = expression" lines; '#' starts a comment.
inline std::vector<NamedExpression> parse_expression_presets(std::string_view text) {
    std::vector<NamedExpression> out;
    for (const auto& [line, key, value] : parse_key_value_lines(text)) out.push_back({key, value});
    return out;
}

/// Evaluates each preset in order and appends it as a new band, so later
/// presets may refer to earlier ones.
inline RasterStack apply_expression_presets(RasterStack stack, const std::vector<NamedExpression>& presets) {
    for (const auto& p : presets) {
        auto grid = band_math(stack, p.expression);
        stack.add(p.name, std::move(grid));
    }
    return stack;
}

// ---------------------------------------------------------------------------
// Derived layers

/// Sample standard deviation over a centred window truncated at the grid
/// edges. Cells whose window holds fewer than two valid values are NODATA.
inline RasterGrid focal_sd(const RasterGrid& grid, int window) {
    if (window < 3 || window % 2 == 0)
        throw ArgumentError("focal window must be an odd integer >= 3, got " + std::to_string(window));
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto nrows = static_cast<std::ptrdiff_t>(grid.nrows());
    const auto ncols = static_cast<std::ptrdiff_t>(grid.ncols());

    RasterGrid out(grid.geometry(), grid.nodata());
    std::vector<double> buffer;
    buffer.reserve(static_cast<std::size_t>(window * window));
    for (std::ptrdiff_t r = 0; r < nrows; ++r) {
        for (std::ptrdiff_t c = 0; c < ncols; ++c) {
            buffer.clear();
            for (auto rr = std::max<std::ptrdiff_t>(0, r - half); rr <= std::min(nrows - 1, r + half); ++rr) {
                for (auto cc = std::max<std::ptrdiff_t>(0, c - half); cc <= std::min(ncols - 1, c + half); ++cc) {
                    const double v = grid(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                    if (!grid.is_nodata(v)) buffer.push_back(v);
                }
            }
            if (buffer.size() < 2) continue;
            // Shifted by the first value so flat windows come out exactly zero.
            const double shift = buffer.front();
            double mean = 0.0;
            for (double v : buffer) mean += v - shift;
            mean /= static_cast<double>(buffer.size());
            double ss = 0.0;
            for (double v : buffer) ss += (v - shift - mean) * (v - shift - mean);
            out.set(static_cast<std::size_t>(r), static_cast<std::size_t>(c),
                    std::sqrt(ss / static_cast<double>(buffer.size() - 1)));
        }
    }
    return out;
}

struct PrincipalAxis {
    std::vector<double> loadings;     // unit length, first nonzero entry positive
    std::vector<double> means;        // per band, over cells valid in every band
    std::vector<double> sds;          // sample standard deviations
    std::vector<double> eigenvalues;  // of the correlation matrix, descending
    double explained_fraction() const {
        double total = 0.0;
        for (double e : eigenvalues) total += e;
        return total > 0.0 ? eigenvalues.front() / total : 0.0;
    }
};

/// Leading eigenvector of the band correlation matrix.
inline PrincipalAxis first_principal_axis(const RasterStack& stack) {
    const std::size_t p = stack.size();
    if (p < 2) throw ArgumentError("PCA needs at least two bands");
    const auto& bands = stack.bands();
    const std::size_t n_cells = bands.front().grid.size();

    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < n_cells; ++i) {
        bool ok = true;
        for (const auto& b : bands) ok = ok && !b.grid.is_nodata(b.grid.at(i));
        if (ok) valid.push_back(i);
    }
    if (valid.size() < 2) throw DegenerateError("PCA needs at least two cells valid in every band");

    PrincipalAxis axis;
    axis.means.resize(p);
    axis.sds.resize(p);
    const auto n = static_cast<double>(valid.size());
    Eigen::MatrixXd z(static_cast<Eigen::Index>(valid.size()), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t i : valid) mean += bands[j].grid.at(i);
        mean /= n;
        double ss = 0.0;
        for (std::size_t i : valid) ss += (bands[j].grid.at(i) - mean) * (bands[j].grid.at(i) - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean)))
            throw DegenerateError("band '" + bands[j].name + "' has zero variance");
        axis.means[j] = mean;
        axis.sds[j] = sd;
        for (std::size_t k = 0; k < valid.size(); ++k)
            z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = (bands[j].grid.at(valid[k]) - mean) / sd;
    }
    const Eigen::MatrixXd corr = (z.transpose() * z) / (n - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr);
    const auto& evals = solver.eigenvalues();  // ascending
    const auto& evecs = solver.eigenvectors();
    const auto lead = static_cast<Eigen::Index>(p - 1);

    axis.loadings.resize(p);
    for (std::size_t j = 0; j < p; ++j) axis.loadings[j] = evecs(static_cast<Eigen::Index>(j), lead);
    for (double v : axis.loadings) {
        if (v != 0.0) {
            if (v < 0.0)
                for (double& w : axis.loadings) w = -w;
            break;
        }
    }
    for (Eigen::Index k = lead; k >= 0; --k) axis.eigenvalues.push_back(evals(k));
    return axis;
}

/// Per-cell scores on the first principal component of the standardized bands.
inline RasterGrid pca_first_component(const RasterStack& stack) {
    const auto axis = first_principal_axis(stack);
    const auto& bands = stack.bands();
    RasterGrid out(stack.geometry(), bands.front().grid.nodata());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double score = 0.0;
        bool ok = true;
        for (std::size_t j = 0; j < bands.size() && ok; ++j) {
            const double v = bands[j].grid.at(i);
            if (bands[j].grid.is_nodata(v)) ok = false;
            else score += axis.loadings[j] * (v - axis.means[j]) / axis.sds[j];
        }
        if (ok) out.set(i / out.ncols(), i % out.ncols(), score);
    }
    return out;
}

struct TerrainLayers {
    RasterGrid slope;   // radians in [0, pi/2)
    RasterGrid aspect;  // radians in [0, 2 pi), clockwise from north, downslope facing
};

/// Horn's 3x3 gradient. Border cells, cells with NODATA neighbours and (for
/// aspect) flat cells are NODATA.
inline TerrainLayers slope_aspect(const RasterGrid& dem) {
    if (dem.nrows() < 3 || dem.ncols() < 3) throw ArgumentError("slope/aspect needs at least 3x3 cells");
    TerrainLayers out{RasterGrid(dem.geometry(), dem.nodata()), RasterGrid(dem.geometry(), dem.nodata())};
    const double cs = dem.cell_size();
    for (std::size_t r = 1; r + 1 < dem.nrows(); ++r) {
        for (std::size_t c = 1; c + 1 < dem.ncols(); ++c) {
            double z[3][3];
            bool ok = true;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const double v = dem(r + dr, c + dc);
                    ok = ok && !dem.is_nodata(v);
                    z[dr + 1][dc + 1] = v;
                }
            if (!ok) continue;
            // East and north components of the gradient (rows run north to south).
            const double gx = ((z[0][2] + 2 * z[1][2] + z[2][2]) - (z[0][0] + 2 * z[1][0] + z[2][0])) / (8 * cs);
            const double gy = ((z[0][0] + 2 * z[0][1] + z[0][2]) - (z[2][0] + 2 * z[2][1] + z[2][2])) / (8 * cs);
            const double magnitude = std::hypot(gx, gy);
            out.slope.set(r, c, std::atan(magnitude));
            if (magnitude < 1e-12) continue;
            double aspect = std::atan2(-gx, -gy);
            if (aspect < 0.0) aspect += 2.0 * std::numbers::pi;
            if (aspect >= 2.0 * std::numbers::pi) aspect = 0.0;
            out.aspect.set(r, c, aspect);
        }
    }
    return out;
}

/// Bands "coord_x" and "coord_y" holding each cell's centre coordinates.
inline RasterStack coordinate_layers(const RasterGrid& grid_template) {
    RasterGrid xs(grid_template.geometry(), grid_template.nodata());
    RasterGrid ys(grid_template.geometry(), grid_template.nodata());
    for (std::size_t r = 0; r < xs.nrows(); ++r) {
        for (std::size_t c = 0; c < xs.ncols(); ++c) {
            xs(r, c) = grid_template.center_x(c);
            ys(r, c) = grid_template.center_y(r);
        }
    }
    RasterStack stack;
    stack.add("coord_x", std::move(xs));
    stack.add("coord_y", std::move(ys));
    return stack;
}

}  // namespace spatialcv
