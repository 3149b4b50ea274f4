#include "mixedms/fields.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

using namespace mixedms;

namespace {
std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST(Fields, EmptyGeometryIsBackground) {
    const Grid g = build_grid({2, 2, 4});
    const PermField f = generate_field(g, {});
    for (double v : f.kappa) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Fields, ContrastIsExact) {
    const Grid g = build_grid({2, 2, 8});
    FieldSpec spec;
    spec.contrast = 1e4;
    spec.rects.push_back({2, 2, 5, 5});
    const PermField f = generate_field(g, spec);
    const auto [lo, hi] = std::minmax_element(f.kappa.begin(), f.kappa.end());
    EXPECT_DOUBLE_EQ(*hi / *lo, 1e4);

    spec.contrast = 1e-4;
    const PermField flow = generate_field(g, spec);
    const auto [lo2, hi2] = std::minmax_element(flow.kappa.begin(), flow.kappa.end());
    EXPECT_DOUBLE_EQ(*hi2 / *lo2, 1e4);
}

TEST(Fields, SeedDeterminism) {
    const Grid g = build_grid({3, 3, 8});
    FieldSpec spec;
    spec.contrast = 100.0;
    spec.seed = 42;
    spec.random_rects = 6;
    spec.random_channels = 3;
    const PermField a = generate_field(g, spec);
    const PermField b = generate_field(g, spec);
    EXPECT_EQ(a.kappa, b.kappa);
    spec.seed = 43;
    const PermField c = generate_field(g, spec);
    EXPECT_NE(a.kappa, c.kappa);
}

TEST(Fields, GeometryValidation) {
    const Grid g = build_grid({2, 2, 4});
    FieldSpec spec;
    spec.contrast = 10.0;
    spec.rects.push_back({0, 0, 8, 2});  // row 8 is out of the 8x8 fine grid
    EXPECT_THROW(generate_field(g, spec), std::invalid_argument);
    spec.rects.clear();
    spec.channels.push_back({{{0, 0}, {3, 3}}});  // diagonal segment
    EXPECT_THROW(generate_field(g, spec), std::invalid_argument);
}

TEST(Fields, ChannelPaintsPolyline) {
    const Grid g = build_grid({2, 2, 4});
    FieldSpec spec;
    spec.contrast = 7.0;
    spec.channels.push_back({{{1, 0}, {1, 5}, {6, 5}}});
    const PermField f = generate_field(g, spec);
    int painted = 0;
    for (double v : f.kappa) painted += v == 7.0;
    EXPECT_EQ(painted, 6 + 5);  // 6 cells along the row, 5 more down the column
    EXPECT_DOUBLE_EQ(f.kappa[g.cell_index(1, 3)], 7.0);
    EXPECT_DOUBLE_EQ(f.kappa[g.cell_index(4, 5)], 7.0);
}

TEST(Fields, RasterRoundTrip) {
    const Grid g = build_grid({2, 3, 4});
    FieldSpec spec;
    spec.contrast = 1e-4;
    spec.seed = 7;
    spec.random_rects = 5;
    const PermField f = generate_field(g, spec);
    const std::string path = tmp_path("mixedms_roundtrip.txt");
    save_field(g, f, path);
    const PermField r = load_field(g, path);
    EXPECT_EQ(f.kappa, r.kappa);  // bitwise round trip
    std::remove(path.c_str());
}

TEST(Fields, RasterBottomRowFirst) {
    const Grid g = build_grid({1, 2, 1});  // 1x2 cells, two rows
    PermField f;
    f.kappa = {2.0, 3.0};  // row 0 (top) = 2, row 1 (bottom) = 3
    const std::string path = tmp_path("mixedms_order.txt");
    save_field(g, f, path);
    std::ifstream is(path);
    double first;
    is >> first;
    EXPECT_DOUBLE_EQ(first, 3.0);
    std::remove(path.c_str());
}

TEST(Fields, RasterValidation) {
    const Grid g = build_grid({2, 2, 2});
    const std::string path = tmp_path("mixedms_bad.txt");
    {
        std::ofstream os(path);
        os << "1 1 1 1\n1 1 1 1\n1 1 1 1\n";  // 3 rows, grid needs 4
    }
    EXPECT_THROW(load_field(g, path), std::runtime_error);
    {
        std::ofstream os(path);
        os << "1 1 1 1\n1 0 1 1\n1 1 1 1\n1 1 1 1\n";  // zero entry
    }
    EXPECT_THROW(load_field(g, path), std::domain_error);
    {
        std::ofstream os(path);
        os << "1 1 1 1\n1 x 1 1\n1 1 1 1\n1 1 1 1\n";
    }
    EXPECT_THROW(load_field(g, path), std::runtime_error);
    std::remove(path.c_str());
}

TEST(Fields, CornerSourcePlacement) {
    const Grid g = build_grid({2, 2, 4});
    const SourceField s = corner_source(g);
    EXPECT_EQ(s.f, (std::vector<double>{1.0, 0.0, 0.0, -1.0}));

    const Grid big = build_grid({15, 15, 2});
    const SourceField sb = corner_source(big);
    int nonzero = 0;
    double total = 0.0;
    for (double fK : sb.f) {
        nonzero += fK != 0.0;
        total += fK * big.block_area();
    }
    EXPECT_EQ(nonzero, 2);
    EXPECT_NEAR(total, 0.0, 1e-15);
}

TEST(Fields, CornerSourceDegenerate) {
    const Grid g = build_grid({1, 1, 4});
    EXPECT_THROW(corner_source(g), std::invalid_argument);
}

TEST(Fields, SourceCompatibilityCheck) {
    const Grid g = build_grid({2, 2, 2});
    SourceField s;
    s.f = {1.0, 0.0, 0.0, -0.5};
    EXPECT_THROW(validate_source(g, s), std::invalid_argument);
    s.f = {1.0, -1.0, 2.0, -2.0};
    EXPECT_NO_THROW(validate_source(g, s));
}

TEST(Fields, PresetsAreTwoValuedAndDeterministic) {
    const Grid g = build_grid({8, 8, 16});
    for (double contrast : {1e4, 1e-4}) {
        for (const FieldSpec& spec :
             {inclusion_preset(g, contrast), channel_preset(g, contrast)}) {
            const PermField f = generate_field(g, spec);
            const PermField f2 = generate_field(g, spec);
            EXPECT_EQ(f.kappa, f2.kappa);
            const auto [lo, hi] = std::minmax_element(f.kappa.begin(), f.kappa.end());
            EXPECT_DOUBLE_EQ(*hi / *lo, 1e4);
        }
    }
}

TEST(Fields, ChannelPresetCrossesInterfaces) {
    const Grid g = build_grid({8, 8, 16});
    const PermField f = generate_field(g, channel_preset(g, 1e-4));
    // count coarse faces whose interface is crossed by a channel cell pair
    int crossed = 0;
    for (const CoarseFace& cf : g.coarse_faces) {
        bool hit = false;
        for (int ff : cf.fine_faces) {
            const FineFace& face = g.faces[ff];
            if (f.kappa[face.prev] == 1e-4 && f.kappa[face.next] == 1e-4) hit = true;
        }
        crossed += hit;
    }
    EXPECT_GT(crossed, g.num_coarse_faces() / 3);
}
