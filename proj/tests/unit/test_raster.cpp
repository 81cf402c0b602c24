#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "spatialcv/error.hpp"
#include "spatialcv/random.hpp"
#include "spatialcv/raster.hpp"

using namespace spatialcv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GridGeometry geom(std::size_t ncols, std::size_t nrows, double cell = 1.0, double x0 = 0.0, double y0 = 0.0) {
    return {ncols, nrows, x0, y0, cell};
}

RasterGrid constant(const GridGeometry& g, double v) { return RasterGrid(g, std::vector<double>(g.cell_count(), v)); }

RasterGrid random_grid(const GridGeometry& g, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(g.cell_count());
    for (double& x : v) x = rng.normal();
    return RasterGrid(g, std::move(v));
}

// Leading eigenpair by power iteration on an explicit correlation matrix.
std::pair<double, std::vector<double>> power_iteration(const std::vector<std::vector<double>>& m) {
    const std::size_t p = m.size();
    std::vector<double> v(p, 1.0), w(p);
    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
        for (std::size_t i = 0; i < p; ++i) {
            w[i] = 0.0;
            for (std::size_t j = 0; j < p; ++j) w[i] += m[i][j] * v[j];
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < p; ++i) w[i] /= norm;
        double diff = 0.0;
        for (std::size_t i = 0; i < p; ++i) diff += std::abs(w[i] - v[i]);
        v = w;
        lambda = norm;
        if (diff < 1e-15) break;
    }
    return {lambda, v};
}

double sample_variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("ascii grid round trip") {
    const RasterGrid g(geom(2, 2, 10.0, 100.0, 200.0), {1, 2, 3, 4});
    const auto back = parse_ascii_grid(format_ascii_grid(g));
    CHECK(back.geometry() == g.geometry());
    CHECK(back.values() == g.values());

    const auto dir = std::filesystem::temp_directory_path() / "spatialcv_raster_test";
    std::filesystem::remove_all(dir);
    write_ascii_grid(g, dir / "g.asc");
    CHECK(read_ascii_grid(dir / "g.asc").values() == g.values());
    std::filesystem::remove_all(dir);
}

TEST_CASE("ascii grid header rules") {
    CHECK_THROWS_AS(parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n"),
                    FormatError);
    CHECK_THROWS_AS(parse_ascii_grid("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 x\n"), ParseError);
    CHECK_THROWS_AS(parse_ascii_grid("ncols 2\nnrows 1\nxllcorner 0\ncellsize 1\n1 2\n"), FormatError);

    const auto g = parse_ascii_grid("NCOLS 2\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nnodata_value -9999\n5 -9999\n");
    CHECK_FALSE(g.is_nodata(0, 0));
    CHECK(g.is_nodata(0, 1));

    const auto c = parse_ascii_grid("ncols 1\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n7\n");
    CHECK(c.x_min() == 0.0);
    CHECK(c.y_min() == 0.0);
}

TEST_CASE("cells own their lower-left edges") {
    const RasterGrid g(geom(4, 3, 2.0, 10.0, 20.0));
    CHECK(g.locate(10.0, 20.0) == CellIndex{2, 0});
    CHECK(g.locate(12.0, 20.0) == CellIndex{2, 1});
    CHECK(g.locate(17.999, 25.999) == CellIndex{0, 3});
    CHECK_FALSE(g.locate(18.0, 21.0));
    CHECK_FALSE(g.locate(11.0, 26.0));
    CHECK_FALSE(g.locate(9.999, 21.0));
    CHECK(g.center_x(0) == 11.0);
    CHECK(g.center_y(0) == 25.0);
}

TEST_CASE("stack keeps bands co-registered and uniquely named") {
    RasterStack s;
    s.add("a", constant(geom(3, 3), 1));
    CHECK_THROWS_AS(s.add("a", constant(geom(3, 3), 2)), ValidationError);
    CHECK_THROWS_AS(s.add("b", constant(geom(3, 4), 2)), ValidationError);
    CHECK_THROWS_AS(s.add("", constant(geom(3, 3), 2)), ValidationError);
    CHECK_THROWS_AS(s.band("zzz"), FeatureMismatchError);
}

TEST_CASE("stack manifest round trip") {
    RasterStack s;
    s.add("r", random_grid(geom(5, 4), 1));
    s.add("g", random_grid(geom(5, 4), 2));
    const auto dir = std::filesystem::temp_directory_path() / "spatialcv_stack_test";
    std::filesystem::remove_all(dir);
    write_stack(s, dir);
    const auto back = read_stack_manifest(dir / "stack.txt");
    CHECK(back.names() == s.names());
    CHECK(back.band("g").values() == s.band("g").values());
    std::filesystem::remove_all(dir);
}

TEST_CASE("band math") {
    RasterStack s;
    s.add("g", constant(geom(3, 2), 2.0));
    s.add("r", constant(geom(3, 2), 1.0));
    const auto ngrdi = band_math(s, "(g - r) / (g + r)");
    for (double v : ngrdi.values()) CHECK_THAT(v, WithinAbs(1.0 / 3.0, 1e-15));
    const auto zero = band_math(s, "g - g");
    for (double v : zero.values()) CHECK(v == 0.0);
    CHECK(band_math(s, "-g * 2 + 1.5e1").at(0) == 11.0);
    CHECK(band_math(s, "2 * (g + r) - -r").at(0) == 7.0);

    RasterStack z;
    z.add("g", constant(geom(3, 2), 1.0));
    z.add("r", constant(geom(3, 2), -1.0));
    const auto div0 = band_math(z, "(g - r)/(g + r)");
    for (std::size_t i = 0; i < div0.size(); ++i) CHECK(div0.is_nodata(div0.at(i)));

    CHECK_THROWS_AS(band_math(s, "g + nir"), ExpressionError);
    CHECK_THROWS_AS(band_math(s, "(g - r"), ParseError);
    CHECK_THROWS_AS(band_math(s, "g $ r"), ParseError);
    try {
        band_math(s, "g + ) ");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("offset 4") != std::string::npos);
    }
}

TEST_CASE("band math propagates nodata") {
    RasterStack s;
    RasterGrid a(geom(2, 1), {1.0, kDefaultNodata});
    s.add("a", a);
    const auto out = band_math(s, "a + 1");
    CHECK(out.at(0) == 2.0);
    CHECK(out.is_nodata(out.at(1)));
}

TEST_CASE("expression presets append bands in order") {
    RasterStack s;
    s.add("G", constant(geom(2, 2), 3.0));
    s.add("R", constant(geom(2, 2), 1.0));
    const auto presets = parse_expression_presets("# indices\nNGRDI = (G - R) / (G + R)\nTWICE = NGRDI * 2\n");
    REQUIRE(presets.size() == 2);
    const auto out = apply_expression_presets(s, presets);
    CHECK(out.names() == std::vector<std::string>{"G", "R", "NGRDI", "TWICE"});
    CHECK(out.band("TWICE").at(0) == 1.0);
}

TEST_CASE("focal standard deviation") {
    for (std::size_t w : {3, 5}) {
        const auto flat = focal_sd(constant(geom(6, 5), 4.2), w);
        for (double v : flat.values()) CHECK(v == 0.0);
    }

    const RasterGrid nine(geom(3, 3), {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK_THAT(focal_sd(nine, 3)(1, 1), WithinAbs(std::sqrt(7.5), 1e-12));
    CHECK_THAT(focal_sd(nine, 3)(0, 0), WithinAbs(std::sqrt(sample_variance({1, 2, 4, 5})), 1e-12));

    RasterGrid holed = nine;
    holed(1, 1) = kDefaultNodata;
    CHECK_THAT(focal_sd(holed, 3)(0, 0), WithinAbs(std::sqrt(sample_variance({1, 2, 4})), 1e-12));
    CHECK_THAT(focal_sd(holed, 3)(1, 1), WithinAbs(std::sqrt(sample_variance({1, 2, 3, 4, 6, 7, 8, 9})), 1e-12));

    RasterGrid sparse(geom(3, 3));
    sparse(0, 0) = 1.0;
    CHECK(sparse.is_nodata(focal_sd(sparse, 3)(1, 1)));

    CHECK_THROWS_AS(focal_sd(nine, 4), ArgumentError);
    CHECK_THROWS_AS(focal_sd(nine, 1), ArgumentError);
}

TEST_CASE("focal sd is shift invariant and scale equivariant") {
    const auto g = random_grid(geom(12, 9), 17);
    std::vector<double> shifted, scaled;
    for (double v : g.values()) {
        shifted.push_back(v + 100.0);
        scaled.push_back(v * 3.0);
    }
    const auto base = focal_sd(g, 5);
    const auto s = focal_sd(RasterGrid(g.geometry(), shifted), 5);
    const auto m = focal_sd(RasterGrid(g.geometry(), scaled), 5);
    CHECK(base.geometry() == g.geometry());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK_THAT(s.at(i), WithinAbs(base.at(i), 1e-9));
        CHECK_THAT(m.at(i), WithinAbs(3.0 * base.at(i), 1e-9));
    }
}

TEST_CASE("pca of perfectly correlated bands") {
    const auto b1 = random_grid(geom(8, 6), 3);
    std::vector<double> doubled;
    for (double v : b1.values()) doubled.push_back(2.0 * v);
    RasterStack s;
    s.add("b1", b1);
    s.add("b2", RasterGrid(b1.geometry(), doubled));
    const auto axis = first_principal_axis(s);
    CHECK_THAT(axis.explained_fraction(), WithinAbs(1.0, 1e-12));
    const auto pc = pca_first_component(s);
    // Affine in b1: pc = a * b1 + c with a > 0 by the sign rule.
    const double a = (pc.at(1) - pc.at(0)) / (b1.at(1) - b1.at(0));
    CHECK(a > 0.0);
    for (std::size_t i = 0; i < pc.size(); ++i) CHECK_THAT(pc.at(i), WithinAbs(pc.at(0) + a * (b1.at(i) - b1.at(0)), 1e-9));
}

TEST_CASE("pca loadings are unit length with a positive first entry") {
    RasterStack s;
    s.add("a", random_grid(geom(30, 30), 4));
    s.add("b", random_grid(geom(30, 30), 5));
    const auto axis = first_principal_axis(s);
    CHECK_THAT(std::hypot(axis.loadings[0], axis.loadings[1]), WithinAbs(1.0, 1e-12));
    CHECK(axis.loadings[0] > 0.0);
    CHECK(axis.eigenvalues.size() == 2);
    CHECK(axis.eigenvalues[0] >= axis.eigenvalues[1]);
}

TEST_CASE("pca matches a power-iteration oracle") {
    const auto g = geom(25, 20);
    Rng rng(99);
    std::vector<double> a(g.cell_count()), b(g.cell_count()), c(g.cell_count());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = 10.0 + rng.normal();
        b[i] = 0.6 * a[i] + rng.normal() * 2.0;
        c[i] = -0.3 * a[i] + 0.5 * b[i] + rng.normal() * 0.1;
    }
    RasterStack s;
    s.add("a", RasterGrid(g, a));
    s.add("b", RasterGrid(g, b));
    s.add("c", RasterGrid(g, c));

    // Oracle: correlation matrix by direct sums, then power iteration.
    const std::vector<std::vector<double>> cols{a, b, c};
    std::vector<std::vector<double>> z(3);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (double v : cols[j]) mean += v;
        mean /= static_cast<double>(a.size());
        const double sd = std::sqrt(sample_variance(cols[j]));
        for (double v : cols[j]) z[j].push_back((v - mean) / sd);
    }
    std::vector<std::vector<double>> corr(3, std::vector<double>(3, 0.0));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t k = 0; k < a.size(); ++k) corr[i][j] += z[i][k] * z[j][k];
            corr[i][j] /= static_cast<double>(a.size() - 1);
        }
    const auto [lambda, vec] = power_iteration(corr);

    const auto pc = pca_first_component(s);
    CHECK_THAT(sample_variance(pc.values()), WithinRel(lambda, 1e-8));
    const auto axis = first_principal_axis(s);
    CHECK_THAT(axis.eigenvalues.front(), WithinRel(lambda, 1e-8));
    const double sign = vec[0] > 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < 3; ++j) CHECK_THAT(axis.loadings[j], WithinAbs(sign * vec[j], 1e-8));
}

TEST_CASE("pca rejects degenerate input") {
    RasterStack s;
    s.add("a", random_grid(geom(4, 4), 1));
    CHECK_THROWS_AS(first_principal_axis(s), ArgumentError);
    s.add("flat", constant(geom(4, 4), 3.0));
    try {
        first_principal_axis(s);
        FAIL("expected a degenerate band error");
    } catch (const DegenerateError& e) {
        CHECK(std::string(e.what()).find("flat") != std::string::npos);
    }
}

TEST_CASE("slope and aspect of analytic planes") {
    const auto g = geom(6, 5);
    const auto flat = slope_aspect(constant(g, 12.0));
    for (std::size_t r = 1; r + 1 < g.nrows; ++r)
        for (std::size_t c = 1; c + 1 < g.ncols; ++c) {
            CHECK(flat.slope(r, c) == 0.0);
            CHECK(flat.aspect.is_nodata(r, c));
        }

    RasterGrid east(g), north(g);
    for (std::size_t r = 0; r < g.nrows; ++r)
        for (std::size_t c = 0; c < g.ncols; ++c) {
            east(r, c) = east.center_x(c);
            north(r, c) = north.center_y(r);
        }
    const auto te = slope_aspect(east);
    const auto tn = slope_aspect(north);
    for (std::size_t r = 1; r + 1 < g.nrows; ++r)
        for (std::size_t c = 1; c + 1 < g.ncols; ++c) {
            CHECK_THAT(te.slope(r, c), WithinAbs(std::numbers::pi / 4, 1e-12));
            CHECK_THAT(te.aspect(r, c), WithinAbs(3 * std::numbers::pi / 2, 1e-12));
            CHECK_THAT(tn.slope(r, c), WithinAbs(std::numbers::pi / 4, 1e-12));
            CHECK_THAT(tn.aspect(r, c), WithinAbs(std::numbers::pi, 1e-12));
        }
    CHECK(te.slope.is_nodata(0, 0));
    CHECK(te.aspect.is_nodata(g.nrows - 1, 2));
    CHECK_THROWS_AS(slope_aspect(constant(geom(2, 5), 1.0)), ArgumentError);
}

TEST_CASE("slope ignores offsets and aspect ignores vertical scale") {
    const auto dem = random_grid(geom(10, 8, 2.0), 12);
    std::vector<double> lifted, stretched;
    for (double v : dem.values()) {
        lifted.push_back(v + 500.0);
        stretched.push_back(v * 4.0);
    }
    const auto base = slope_aspect(dem);
    const auto up = slope_aspect(RasterGrid(dem.geometry(), lifted));
    const auto tall = slope_aspect(RasterGrid(dem.geometry(), stretched));
    for (std::size_t i = 0; i < base.slope.size(); ++i) {
        CHECK_THAT(up.slope.at(i), WithinAbs(base.slope.at(i), 1e-9));
        CHECK_THAT(tall.aspect.at(i), WithinAbs(base.aspect.at(i), 1e-9));
    }
}

TEST_CASE("coordinate layers") {
    const auto unit = coordinate_layers(RasterGrid(geom(1, 1)));
    CHECK(unit.band("coord_x").at(0) == 0.5);
    CHECK(unit.band("coord_y").at(0) == 0.5);

    const auto g = geom(4, 3, 2.0, 10.0, 20.0);
    const auto s = coordinate_layers(RasterGrid(g));
    const auto& xs = s.band("coord_x");
    const auto& ys = s.band("coord_y");
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(xs(r, c) == xs(0, c));
            CHECK(ys(r, c) == ys(r, 0));
        }
    CHECK(ys(0, 0) > ys(2, 0));

    auto shifted = g;
    shifted.x_min += 7.25;
    const auto t = coordinate_layers(RasterGrid(shifted));
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(t.band("coord_x").at(i) == xs.at(i) + 7.25);
}

TEST_CASE("derived layers keep the grid geometry") {
    const auto g = random_grid(geom(7, 6, 3.0, 5.0, 9.0), 2);
    RasterStack s;
    s.add("a", g);
    s.add("b", random_grid(g.geometry(), 3));
    CHECK(focal_sd(g, 3).geometry() == g.geometry());
    CHECK(pca_first_component(s).geometry() == g.geometry());
    CHECK(slope_aspect(g).slope.geometry() == g.geometry());
    CHECK(band_math(s, "a*b").geometry() == g.geometry());
}
