#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "microricci/corpus.hpp"
#include "microricci/distortion.hpp"
#include "microricci/generate.hpp"
#include "microricci/metric.hpp"
#include "microricci/obj_io.hpp"

using namespace microricci;

namespace {

constexpr double kPi = std::numbers::pi;

const char* kTetraObj = R"(# regular tetrahedron
v 1 1 1
v 1 -1 -1
v -1 1 -1
v -1 -1 1
f 1 2 3
f 1 4 2
f 1 3 4
f 2 4 3
)";

TriMesh tetra_from_obj() {
    std::istringstream in(kTetraObj);
    return read_obj(in);
}

std::vector<double> random_x(std::size_t n, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

}  // namespace

TEST(ObjIo, TetrahedronCounts) {
    auto m = tetra_from_obj();
    EXPECT_EQ(m.num_vertices(), 4u);
    EXPECT_EQ(m.num_edges(), 6u);
    EXPECT_EQ(m.num_faces(), 4u);
    EXPECT_EQ(m.euler_characteristic(), 2);
}

TEST(ObjIo, QuadFaceNamesFaceIndex) {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nf 1 2 5\nf 1 2 3 4\n");
    try {
        read_obj(in);
        FAIL() << "quad accepted";
    } catch (const TopologyError& e) {
        EXPECT_EQ(e.face(), 1u);
        EXPECT_NE(std::string(e.what()).find("face 1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
    }
}

TEST(ObjIo, MalformedNumberReportsLine) {
    std::istringstream in("v 0 0 0\nv 1 zz 0\n");
    try {
        read_obj(in);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(ObjIo, BoundaryEdgeRejected) {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    EXPECT_THROW(read_obj(in), TopologyError);
}

TEST(ObjIo, NonManifoldEdgeRejected) {
    // three triangles on one edge
    std::istringstream in(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\n"
        "f 1 2 3\nf 2 1 4\nf 1 2 5\n");
    EXPECT_THROW(read_obj(in), TopologyError);
}

TEST(ObjIo, IcosahedronCounts) {
    std::ostringstream out;
    write_obj(out, gen_icosphere(0));
    std::istringstream in(out.str());
    auto m = read_obj(in);
    EXPECT_EQ(m.num_vertices(), 12u);
    EXPECT_EQ(m.num_edges(), 30u);
    EXPECT_EQ(m.num_faces(), 20u);
    EXPECT_EQ(m.euler_characteristic(), 2);
}

TEST(ObjIo, RoundTripKeepsTopologyPositionsAndUv) {
    auto m = gen_icosphere(2);
    std::ostringstream out;
    write_obj(out, m);
    std::istringstream in(out.str());
    auto r = read_obj(in);
    ASSERT_EQ(r.num_vertices(), m.num_vertices());
    EXPECT_EQ(r.faces(), m.faces());
    EXPECT_EQ(r.positions(), m.positions());
    ASSERT_TRUE(r.has_uv());
    EXPECT_EQ(r.uv(), m.uv());
}

TEST(ObjIo, SlashFormsAndNegativeIndices) {
    std::istringstream in(
        "v 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\n"
        "f 1/1/1 2/2/1 3/3/1\nf 1//1 4//1 2//1\nf -4/-3 -2/-2 -1/-1\nf 2 4 3\n");
    auto m = read_obj(in);
    EXPECT_EQ(m.num_faces(), 4u);
    EXPECT_FALSE(m.has_uv());  // only some faces carry texture indices
}

TEST(MeshCore, OneRingMatchesFaces) {
    auto m = gen_icosphere(2);
    std::vector<std::set<Index>> rebuilt(m.num_vertices());
    for (const auto& f : m.faces())
        for (int k = 0; k < 3; ++k) {
            rebuilt[f[k]].insert(f[(k + 1) % 3]);
            rebuilt[f[k]].insert(f[(k + 2) % 3]);
        }
    for (Index v = 0; v < m.num_vertices(); ++v) {
        auto ring = m.one_ring(v);
        EXPECT_TRUE(std::is_sorted(ring.begin(), ring.end()));
        EXPECT_EQ(std::set<Index>(ring.begin(), ring.end()), rebuilt[v]);
    }
}

TEST(MeshCore, EveryEdgeHasTwoFaces) {
    auto m = gen_icosphere(3);
    std::map<std::pair<Index, Index>, int> count;
    for (const auto& f : m.faces())
        for (int k = 0; k < 3; ++k) {
            Index a = f[k], b = f[(k + 1) % 3];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    EXPECT_EQ(count.size(), m.num_edges());
    for (const auto& [e, c] : count) EXPECT_EQ(c, 2);
}

TEST(MeshCore, RepeatedVertexInFaceRejected) {
    std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    EXPECT_THROW(TriMesh::build(p, {{0, 0, 1}}), TopologyError);
}

TEST(MeshCore, UnreferencedVertexRejected) {
    auto t = gen_tetrahedron();
    auto p = t.positions();
    p.push_back({5, 5, 5});
    EXPECT_THROW(TriMesh::build(p, t.faces()), TopologyError);
}

TEST(Icosphere, FaceAndVertexCounts) {
    for (int s = 0; s <= 5; ++s) {
        auto m = gen_icosphere(s);
        const std::size_t faces = 20u * (1u << (2 * s));
        EXPECT_EQ(m.num_faces(), faces);
        EXPECT_EQ(m.num_vertices(), faces / 2 + 2);
        EXPECT_EQ(m.euler_characteristic(), 2);
    }
    EXPECT_EQ(gen_icosphere(3).num_vertices(), 642u);
    EXPECT_EQ(gen_icosphere(5).num_vertices(), 10242u);
}

TEST(Icosphere, VerticesOnSphere) {
    auto m = gen_icosphere(3, 2.5);
    for (const auto& p : m.positions()) EXPECT_NEAR(norm(p), 2.5, 1e-12);
}

TEST(Icosphere, TooManySubdivisionsRejected) {
    EXPECT_THROW(gen_icosphere(8), Error);
    EXPECT_THROW(gen_icosphere(-1), Error);
}

TEST(Distortion, ZeroNoiseIsBitIdentical) {
    auto m = gen_icosphere(2);
    auto d = apply_distortion(m, {DistortionKind::gaussian_noise, 0.0, 9});
    EXPECT_EQ(d.positions(), m.positions());
}

TEST(Distortion, NoiseKeepsTopologyAndIsSeeded) {
    auto m = gen_icosphere(2);
    auto a = apply_distortion(m, {DistortionKind::gaussian_noise, 0.01, 5});
    auto b = apply_distortion(m, {DistortionKind::gaussian_noise, 0.01, 5});
    auto c = apply_distortion(m, {DistortionKind::gaussian_noise, 0.01, 6});
    EXPECT_EQ(a.faces(), m.faces());
    EXPECT_EQ(a.positions(), b.positions());
    EXPECT_NE(a.positions(), c.positions());
}

TEST(Distortion, QuantizeThirtyBitsBound) {
    auto m = gen_icosphere(3);
    auto q = apply_distortion(m, {DistortionKind::quantize_position, 30, 0});
    const double bound = m.bounding_box_diagonal() / std::ldexp(1.0, 30);
    double worst = 0.0;
    for (std::size_t v = 0; v < m.num_vertices(); ++v) worst = std::max(worst, norm(q.positions()[v] - m.positions()[v]));
    EXPECT_LE(worst, bound);
    EXPECT_GT(worst, 0.0);
}

TEST(Distortion, DecimateFullFractionUnchanged) {
    auto m = gen_icosphere(2);
    auto d = apply_distortion(m, {DistortionKind::decimate, 1.0, 0});
    EXPECT_EQ(d.num_vertices(), m.num_vertices());
}

TEST(Distortion, DecimateHitsTargetAndStaysClosed) {
    auto m = gen_icosphere(3);
    auto d = apply_distortion(m, {DistortionKind::decimate, 0.4, 0});
    EXPECT_EQ(d.num_vertices(), static_cast<std::size_t>(std::llround(0.4 * 642)));
    EXPECT_EQ(d.euler_characteristic(), 2);
    auto again = apply_distortion(m, {DistortionKind::decimate, 0.4, 0});
    EXPECT_EQ(d.positions(), again.positions());
    EXPECT_EQ(d.faces(), again.faces());
}

TEST(Distortion, DecimateBelowFourVerticesFails) {
    EXPECT_THROW(apply_distortion(gen_icosphere(0), {DistortionKind::decimate, 0.2, 0}), Error);
}

TEST(Distortion, RangesValidated) {
    auto m = gen_tetrahedron();
    EXPECT_THROW(apply_distortion(m, {DistortionKind::gaussian_noise, 0.6, 0}), Error);
    EXPECT_THROW(apply_distortion(m, {DistortionKind::quantize_position, 0, 0}), Error);
    EXPECT_THROW(apply_distortion(m, {DistortionKind::quantize_position, 7.5, 0}), Error);
    EXPECT_THROW(apply_distortion(m, {DistortionKind::decimate, 0.0, 0}), Error);
}

TEST(Metric, EdgeLengthExamples) {
    auto m = gen_tetrahedron();
    auto l0 = edge_lengths(m, std::vector<double>(4, 0.0));
    for (double l : l0) EXPECT_EQ(l, 1.0);
    std::vector<double> x{std::log(2.0), std::log(3.0), 0.0, 0.0};
    auto l = edge_lengths(m, x);
    EXPECT_NEAR(l[m.edge_index(0, 1)], 6.0, 1e-14);
    EXPECT_EQ(m.edge_index(0, 1), m.edge_index(1, 0));
    std::vector<double> c(4, 0.3);
    for (double v : edge_lengths(m, c)) EXPECT_NEAR(v, std::exp(0.6), 1e-15);
}

TEST(Metric, AngleExamples) {
    double a = 0.0;
    EXPECT_TRUE(angle_opposite(1, 1, 1, a));
    EXPECT_NEAR(a, kPi / 3, 1e-15);
    EXPECT_TRUE(angle_opposite(5, 3, 4, a));
    EXPECT_NEAR(a, kPi / 2, 1e-15);
    EXPECT_FALSE(angle_opposite(2.1, 1, 1, a));
}

TEST(Metric, DegenerateFaceErrorNamesFaceAndLengths) {
    auto m = gen_tetrahedron();
    std::vector<double> x{2.0, -2.0, -2.0, 0.0};
    try {
        gauss_curvature(m, x);
        FAIL();
    } catch (const DegenerateTriangleError& e) {
        EXPECT_LT(e.face(), m.num_faces());
        auto l = e.lengths();
        std::sort(l.begin(), l.end());
        EXPECT_GE(l[2], l[0] + l[1]);
    }
    auto clamped = corner_angles(m, edge_lengths(m, x), AngleMode::clamp);
    EXPECT_FALSE(clamped.clamped_faces.empty());
}

TEST(Metric, TetrahedronCurvatureIsPi) {
    auto k = gauss_curvature(gen_tetrahedron(), std::vector<double>(4, 0.0));
    for (double v : k) EXPECT_NEAR(v, kPi, 1e-14);
}

TEST(Metric, FaceAngleSumsArePi) {
    auto m = gen_icosphere(3);
    auto x = random_x(m.num_vertices(), 0.05, 11);
    auto ang = corner_angles(m, edge_lengths(m, x)).angles;
    for (const auto& a : ang) EXPECT_NEAR(a[0] + a[1] + a[2], kPi, 1e-12);
}

// Independent oracle: law of cosines straight from exp(x_i + x_j) per face.
TEST(Metric, CurvatureMatchesDirectAngleSum) {
    auto m = gen_icosphere(2);
    auto x = random_x(m.num_vertices(), 0.05, 3);
    std::vector<double> oracle(m.num_vertices(), 2 * kPi);
    for (const auto& f : m.faces()) {
        for (int k = 0; k < 3; ++k) {
            Index i = f[k], j = f[(k + 1) % 3], l = f[(k + 2) % 3];
            double a = std::exp(x[j] + x[l]), b = std::exp(x[i] + x[j]), c = std::exp(x[i] + x[l]);
            oracle[i] -= std::acos((b * b + c * c - a * a) / (2 * b * c));
        }
    }
    auto k = gauss_curvature(m, x);
    for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(k[i], oracle[i], 1e-13);
}

TEST(Metric, GaussBonnetProperty) {
    for (int s = 0; s <= 4; ++s) {
        auto m = gen_icosphere(s);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            auto x = random_x(m.num_vertices(), 0.05, seed + 100 * s);
            auto k = gauss_curvature(m, x);
            double total = 0.0;
            for (double v : k) total += v;
            EXPECT_LE(std::abs(total - 4 * kPi) / (4 * kPi), 1e-9) << "s=" << s << " seed=" << seed;
        }
    }
}

TEST(Metric, GaussBonnetOnDecimatedMesh) {
    auto m = apply_distortion(gen_icosphere(3), {DistortionKind::decimate, 0.3, 0});
    auto x = random_x(m.num_vertices(), 0.01, 1);
    auto k = gauss_curvature(m, x);
    double total = 0.0;
    for (double v : k) total += v;
    EXPECT_NEAR(total, 2 * kPi * m.euler_characteristic(), 1e-9 * 4 * kPi);
}

TEST(Metric, LengthMismatchRejected) {
    auto m = gen_tetrahedron();
    EXPECT_THROW(edge_lengths(m, std::vector<double>(3, 0.0)), DimensionError);
}

TEST(Corpus, RandomLogRadiiAmplitudeAndSeed) {
    auto a = random_log_radii(100, 0.1, 4);
    double peak = 0.0;
    for (double v : a) peak = std::max(peak, std::abs(v));
    EXPECT_NEAR(peak, 0.1, 1e-15);
    EXPECT_EQ(a, random_log_radii(100, 0.1, 4));
}

TEST(Corpus, StockCorpusIsDisjointAndSized) {
    auto train = realize(stock_corpus(false));
    auto test = realize(stock_corpus(true));
    ASSERT_EQ(train.size(), 10u);
    ASSERT_EQ(test.size(), 10u);
    for (const auto& e : train) {
        EXPECT_LE(e.mesh.num_vertices(), 5000u);
        for (const auto& t : test) EXPECT_NE(e.name, t.name);
    }
}
