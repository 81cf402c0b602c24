#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "spatialcv/error.hpp"
#include "spatialcv/synthgen.hpp"

using namespace spatialcv;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Correlation between cells and their neighbours `lag` columns east.
double lag_correlation(const RasterGrid& g, std::size_t lag) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < g.nrows(); ++r)
        for (std::size_t c = 0; c + lag < g.ncols(); ++c) {
            a.push_back(g(r, c));
            b.push_back(g(r, c + lag));
        }
    return correlation(a, b);
}

std::vector<double> values(const RasterGrid& g) {
    std::vector<double> out(g.geometry().cell_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.at(i);
    return out;
}

}  // namespace

TEST_CASE("random fields are standardized") {
    const auto g = gaussian_random_field(FieldSpec{128, 128, 1.0, 0, 0, 8.0, 2.0, 5});
    const auto v = values(g);
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-9);
    CHECK(ss / static_cast<double>(v.size() - 1) == Catch::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("random field correlogram") {
    const auto g = gaussian_random_field(FieldSpec{160, 160, 1.0, 0, 0, 8.0, 1.0, 11});
    CHECK(lag_correlation(g, 1) > 0.8);
    CHECK(std::abs(lag_correlation(g, 24)) < 0.2);
    CHECK(lag_correlation(g, 2) < lag_correlation(g, 1));
    CHECK(lag_correlation(g, 8) < lag_correlation(g, 4));
}

TEST_CASE("fields from different seeds are unrelated") {
    const auto a = gaussian_random_field(FieldSpec{128, 128, 1.0, 0, 0, 8.0, 1.0, 1});
    const auto b = gaussian_random_field(FieldSpec{128, 128, 1.0, 0, 0, 8.0, 1.0, 2});
    CHECK(std::abs(correlation(values(a), values(b))) < 0.1);
    const auto again = gaussian_random_field(FieldSpec{128, 128, 1.0, 0, 0, 8.0, 1.0, 1});
    CHECK(values(again) == values(a));
}

TEST_CASE("field arguments") {
    CHECK_THROWS_AS(gaussian_random_field(FieldSpec{8, 64, 1.0, 0, 0, 1.0, 1.0, 1}), ArgumentError);
    CHECK_THROWS_AS(gaussian_random_field(FieldSpec{64, 64, 1.0, 0, 0, 0.0, 1.0, 1}), ArgumentError);
    CHECK_THROWS_AS(gaussian_random_field(FieldSpec{64, 64, 1.0, 0, 0, 16.0, 1.0, 1}), DegenerateError);
}

TEST_CASE("clustered design") {
    const RasterGrid grid(GridGeometry{100, 100, 0, 0, 10}, 0.0);
    const auto pts = clustered_design(grid, DesignSpec{11, 4.0, 30, 3});
    std::set<std::int64_t> groups, ids;
    for (const auto& p : pts) {
        groups.insert(p.group.value);
        ids.insert(p.id);
    }
    CHECK(groups.size() == 11);
    CHECK(ids.size() == pts.size());
    CHECK(pts.size() == 11 * 30);

    // Members stay within the radius of their cluster's mean position.
    for (std::int64_t g : groups) {
        double sx = 0, sy = 0, n = 0;
        for (const auto& p : pts)
            if (p.group.value == g) sx += p.x, sy += p.y, ++n;
        for (const auto& p : pts)
            if (p.group.value == g) CHECK(std::hypot(p.x - sx / n, p.y - sy / n) <= 2 * 4.0 * 10.0);
    }

    const auto singletons = clustered_design(grid, DesignSpec{5, 0.0, 10, 3});
    CHECK(singletons.size() == 5);

    CHECK(clustered_design(grid, DesignSpec{11, 4.0, 30, 3}).size() == pts.size());
    CHECK_THROWS_AS(clustered_design(grid, DesignSpec{40, 8.0, 10, 3}), InfeasibleError);
    CHECK_THROWS_AS(clustered_design(grid, DesignSpec{2, 60.0, 10, 3}), InfeasibleError);
    CHECK_THROWS_AS(clustered_design(grid, DesignSpec{1, 4.0, 10, 3}), ArgumentError);
}

TEST_CASE("benchmark layout") {
    BenchmarkSpec spec;
    spec.ncols = spec.nrows = 96;
    spec.design = DesignSpec{6, 4.0, 20, 0};
    const auto b = make_benchmark(spec);
    std::vector<std::string> names;
    for (const auto& band : b.stack.bands()) names.push_back(band.name);
    CHECK(names == std::vector<std::string>{"signal_1", "signal_2", "distractor_1", "distractor_2", "elevation",
                                            "coord_x", "coord_y"});
    CHECK(b.table.feature_names() == names);
    CHECK(b.table.size() == 6 * 20);
    CHECK(b.table.size() * 20 < b.response.geometry().cell_count());
    for (const auto& row : b.table.rows()) {
        const auto cell = b.response.locate(row.x, row.y);
        REQUIRE(cell);
        CHECK(row.response == b.response(cell->row, cell->col));
    }
    CHECK(b.description.at("design").at("n_samples") == b.table.size());

    const auto again = make_benchmark(spec);
    CHECK(format_samples_csv(again.table) == format_samples_csv(b.table));
    CHECK(values(again.response) == values(b.response));
}

TEST_CASE("noiseless response recovers the weights") {
    BenchmarkSpec spec;
    spec.ncols = spec.nrows = 96;
    spec.noise_fraction = 0.0;
    spec.design = DesignSpec{4, 3.0, 10, 0};
    const auto b = make_benchmark(spec);
    const auto& s1 = b.stack.band("signal_1");
    const auto& s2 = b.stack.band("signal_2");
    const std::size_t n = b.response.geometry().cell_count();
    Eigen::MatrixXd x(n, 4);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = s1.at(i);
        x(i, 2) = s2.at(i);
        x(i, 3) = s1.at(i) * s2.at(i) > 0 ? 1.0 : 0.0;
        y(i) = b.response.at(i);
    }
    const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    CHECK(std::abs(beta(1) - 1.0) < 0.1);
    CHECK(std::abs(beta(2) + 0.5) < 0.1);
    CHECK(std::abs(beta(3) - 0.5) < 0.1);
}

TEST_CASE("response carries no coordinate trend") {
    const auto b = make_benchmark(BenchmarkSpec{});
    const auto y = values(b.response);
    CHECK(std::abs(correlation(y, values(b.stack.band("coord_x")))) < 0.2);
    CHECK(std::abs(correlation(y, values(b.stack.band("coord_y")))) < 0.2);
    CHECK(b.table.size() < b.response.geometry().cell_count() / 20);
    CHECK(b.table.size() == 11 * 75);
}

TEST_CASE("classification benchmark has balanced classes") {
    BenchmarkSpec spec;
    spec.task = Task::classification;
    spec.ncols = spec.nrows = 96;
    spec.design = DesignSpec{5, 3.0, 10, 0};
    const auto b = make_benchmark(spec);
    CHECK(b.table.class_labels() == std::vector<std::string>{"class_1", "class_2", "class_3", "class_4"});
    std::vector<double> counts(4, 0.0);
    for (double v : values(b.response)) counts.at(static_cast<std::size_t>(v)) += 1;
    for (double c : counts) CHECK(std::abs(c / static_cast<double>(b.response.geometry().cell_count()) - 0.25) < 0.05);
}

TEST_CASE("benchmark arguments") {
    BenchmarkSpec spec;
    spec.signal_weights = {1.0};
    CHECK_THROWS_AS(make_benchmark(spec), ArgumentError);
    BenchmarkSpec crowded;
    crowded.ncols = crowded.nrows = 64;
    crowded.design = DesignSpec{30, 6.0, 10, 0};
    CHECK_THROWS_AS(make_benchmark(crowded), InfeasibleError);
}
