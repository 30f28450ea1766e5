#include "floro/elements.h"
#include "floro/geometry.h"
#include "floro/rng.h"

#include "fixtures.h"

#include <catch2/catch_amalgamated.hpp>

#include <set>

using namespace floro;
using geom::Molecule;
using geom::Vec3;

TEST_CASE("molecule validation", "[geometry]") {
  CHECK_THROWS_AS(Molecule{}.validate(), std::invalid_argument);
  Molecule helium{{{2, {0, 0, 0}}}, {}};
  CHECK_THROWS_AS(helium.validate(), std::invalid_argument);
  CHECK_NOTHROW(water().validate());
}

TEST_CASE("mass, center of mass and valence count", "[geometry]") {
  const Molecule mol = water();
  CHECK(mol.total_mass() == Catch::Approx(18.015).margin(1e-12));
  const Vec3 com = mol.center_of_mass();
  CHECK(com.x() == Catch::Approx(0.0).margin(1e-15));
  CHECK(com.y() == Catch::Approx(0.0).margin(1e-15));
  CHECK(com.z() == Catch::Approx(0.065622114904246465).margin(1e-15));
  CHECK(mol.total_valence_electrons() == 8);
}

TEST_CASE("neighbor graph basics", "[geometry]") {
  Molecule pair{{{1, {0, 0, 0}}, {1, {1.0, 0, 0}}}, {}};
  auto g = geom::build_neighbor_graph(pair, 8.0);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0].i == 0);
  CHECK(g.edges[0].j == 1);
  CHECK(g.edges[0].displacement.isApprox(Vec3(1, 0, 0)));
  CHECK(g.edges[1].displacement.isApprox(Vec3(-1, 0, 0)));

  Molecule far{{{1, {0, 0, 0}}, {1, {9.0, 0, 0}}}, {}};
  CHECK(geom::build_neighbor_graph(far, 8.0).edges.empty());

  CHECK(geom::build_neighbor_graph(water(), 8.0).edges.size() == 6);
  CHECK_THROWS_AS(geom::build_neighbor_graph(pair, 0.0),
                  std::invalid_argument);
}

TEST_CASE("neighbor graph matches brute force", "[geometry]") {
  std::mt19937_64 gen(20260814);
  const int zs[5] = {1, 6, 7, 8, 9};
  for (int trial = 0; trial < 4; ++trial) {
    Molecule mol;
    const int n = 50 + trial * 50;
    for (int i = 0; i < n; ++i) {
      mol.atoms.push_back({zs[static_cast<int>(rng::uniform(gen, 0, 5))],
                           {rng::uniform(gen, 0, 12.0),
                            rng::uniform(gen, 0, 12.0),
                            rng::uniform(gen, 0, 12.0)}});
    }
    const double cutoff = 4.0;
    auto g = geom::build_neighbor_graph(mol, cutoff);

    std::set<std::pair<int, int>> expected;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j)
          continue;
        const double d =
            (mol.atoms[j].position - mol.atoms[i].position).norm();
        if (d > 0.0 && d <= cutoff)
          expected.insert({i, j});
      }

    REQUIRE(g.edges.size() == expected.size());
    std::pair<int, int> prev{-1, -1};
    for (const auto &e : g.edges) {
      CHECK(expected.count({e.i, e.j}) == 1);
      CHECK(std::make_pair(e.i, e.j) > prev);
      prev = {e.i, e.j};
      CHECK(e.distance == Catch::Approx(e.displacement.norm()));
      CHECK(e.displacement.isApprox(mol.atoms[e.j].position -
                                    mol.atoms[e.i].position));
    }
  }
}

TEST_CASE("local moment of inertia", "[geometry]") {
  SECTION("axis-aligned hydrogen pair") {
    Molecule mol{{{8, {0, 0, 0}}, {1, {1, 0, 0}}, {1, {-1, 0, 0}}}, {}};
    auto g = geom::build_neighbor_graph(mol, 8.0);
    const auto inertia = geom::local_moi(mol, g, 0);
    const double m2 = 2.0 * atomic_mass(1);
    CHECK(inertia.isApprox(Eigen::Vector3d(0.0, m2, m2).asDiagonal()
                               .toDenseMatrix(),
                           1e-14));
  }

  SECTION("water oxygen, frozen reference") {
    const Molecule mol = water();
    auto g = geom::build_neighbor_graph(mol, 8.0);
    const auto inertia = geom::local_moi(mol, g, 0);
    CHECK(inertia(0, 0) == Catch::Approx(0.69323175936000003).epsilon(1e-14));
    CHECK(inertia(1, 1) == Catch::Approx(1.8491090687999998).epsilon(1e-14));
    CHECK(inertia(2, 2) == Catch::Approx(1.1558773094399999).epsilon(1e-14));
    CHECK(std::abs(inertia(0, 1)) < 1e-15);
    CHECK(std::abs(inertia(0, 2)) < 1e-15);
    CHECK(std::abs(inertia(1, 2)) < 1e-15);
  }

  SECTION("no neighbors gives zero") {
    Molecule mol{{{8, {0, 0, 0}}, {1, {20, 0, 0}}}, {}};
    auto g = geom::build_neighbor_graph(mol, 8.0);
    CHECK(geom::local_moi(mol, g, 0).isZero(0.0));
  }

  SECTION("symmetric positive semidefinite on generic input") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
      Molecule mol;
      for (int i = 0; i < 6; ++i)
        mol.atoms.push_back({1,
                             {rng::uniform(gen, -2, 2),
                              rng::uniform(gen, -2, 2),
                              rng::uniform(gen, -2, 2)}});
      auto g = geom::build_neighbor_graph(mol, 8.0);
      const auto inertia = geom::local_moi(mol, g, 0);
      CHECK(inertia.isApprox(inertia.transpose(), 1e-14));
      Eigen::SelfAdjointEigenSolver<geom::Mat3> es(inertia);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
  }
}

TEST_CASE("eigenvector sign canonicalization", "[geometry]") {
  CHECK(geom::canonicalize({0, 0, 1}, {0, 0, -1}) == Vec3(0, 0, -1));
  CHECK(geom::canonicalize({0, 0, 1}, {0, 0, 2}) == Vec3(0, 0, 1));
  // Orthogonal COM: fall back to first-nonzero-component-positive.
  CHECK(geom::canonicalize({0, 1, 0}, {1, 0, 0}) == Vec3(0, 1, 0));
  CHECK(geom::canonicalize({0, -1, 0}, {1, 0, 0}) == Vec3(0, 1, 0));
  CHECK(geom::canonicalize({-0.5, 0.2, 0}, {0, 0, 0}) == Vec3(0.5, -0.2, 0));
  CHECK_THROWS_AS(geom::canonicalize({0, 0, 0}, {1, 1, 1}),
                  std::invalid_argument);
}

TEST_CASE("symmetry-breaking frame", "[geometry]") {
  SECTION("degenerate pair completed along reference axes") {
    // H pair on the x axis plus one distant F pulling the COM toward
    // (0,+,+): the λ-degenerate {y,z} plane resolves to +y then +z, the
    // zero mode to +x by the fallback rule.
    Molecule mol{{{8, {0, 0, 0}},
                  {1, {1, 0, 0}},
                  {1, {-1, 0, 0}},
                  {9, {0, 30, 30}}},
                 {}};
    auto g = geom::build_neighbor_graph(mol, 8.0);
    const auto frame = geom::symmetry_breaking_frame(mol, g, 0);
    const double m2 = 2.0 * atomic_mass(1);
    CHECK(frame.eigenvalues[0] == Catch::Approx(m2));
    CHECK(frame.eigenvalues[1] == Catch::Approx(m2));
    CHECK(frame.eigenvalues[2] == Catch::Approx(0.0).margin(1e-14));
    CHECK(frame.vectors[0].isApprox(Vec3(0, 1, 0), 1e-12));
    CHECK(frame.vectors[1].isApprox(Vec3(0, 0, 1), 1e-12));
    CHECK(frame.vectors[2].isApprox(Vec3(1, 0, 0), 1e-12));
  }

  SECTION("isolated atom falls back to canonical axes") {
    Molecule mol{{{8, {0, 0, 0}}, {1, {20, 0, 0}}}, {}};
    auto g = geom::build_neighbor_graph(mol, 8.0);
    const auto frame = geom::symmetry_breaking_frame(mol, g, 0);
    for (int k = 0; k < 3; ++k) {
      CHECK(frame.vectors[k] == Vec3::Unit(k));
      CHECK(frame.eigenvalues[k] == 0.0);
    }
  }

  SECTION("orthonormality and ordering") {
    const Molecule mol = generic4();
    auto g = geom::build_neighbor_graph(mol, 8.0);
    REQUIRE_FALSE(geom::near_frame_tie(mol, g, 1e-6));
    for (int i = 0; i < mol.size(); ++i) {
      const auto frame = geom::symmetry_breaking_frame(mol, g, i);
      for (int a = 0; a < 3; ++a) {
        CHECK(frame.vectors[a].norm() == Catch::Approx(1.0).margin(1e-12));
        for (int b = a + 1; b < 3; ++b)
          CHECK(std::abs(frame.vectors[a].dot(frame.vectors[b])) <= 1e-10);
      }
      CHECK(frame.eigenvalues[0] >= frame.eigenvalues[1]);
      CHECK(frame.eigenvalues[1] >= frame.eigenvalues[2]);
    }
  }

  SECTION("rotation equivariance away from ties") {
    const Molecule mol = generic4();
    auto g = geom::build_neighbor_graph(mol, 8.0);
    std::mt19937_64 gen(42);
    for (int trial = 0; trial < 10; ++trial) {
      const geom::Mat3 rot = rng::random_rotation(gen);
      Molecule rotated = mol;
      for (auto &a : rotated.atoms)
        a.position = rot * a.position;
      auto gr = geom::build_neighbor_graph(rotated, 8.0);
      for (int i = 0; i < mol.size(); ++i) {
        const auto f = geom::symmetry_breaking_frame(mol, g, i);
        const auto fr = geom::symmetry_breaking_frame(rotated, gr, i);
        for (int k = 0; k < 3; ++k) {
          const Vec3 expected = rot * f.vectors[k];
          CHECK((fr.vectors[k] - expected).cwiseAbs().maxCoeff() < 1e-8);
          CHECK(fr.eigenvalues[k] ==
                Catch::Approx(f.eigenvalues[k]).margin(1e-10));
        }
      }
    }
  }

  SECTION("translation invariance") {
    const Molecule mol = generic4();
    auto g = geom::build_neighbor_graph(mol, 8.0);
    Molecule shifted = mol;
    for (auto &a : shifted.atoms)
      a.position += Vec3(3.7, -11.2, 0.9);
    auto gs = geom::build_neighbor_graph(shifted, 8.0);
    for (int i = 0; i < mol.size(); ++i) {
      const auto inertia = geom::local_moi(mol, g, i);
      const auto shifted_inertia = geom::local_moi(shifted, gs, i);
      CHECK((inertia - shifted_inertia).cwiseAbs().maxCoeff() < 1e-10);
      const auto f = geom::symmetry_breaking_frame(mol, g, i);
      const auto fs = geom::symmetry_breaking_frame(shifted, gs, i);
      for (int k = 0; k < 3; ++k)
        CHECK((f.vectors[k] - fs.vectors[k]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}
