#include "floro/io.h"
#include "floro/rng.h"

#include "fixtures.h"

#include <catch2/catch_amalgamated.hpp>

using namespace floro;
using Catch::Matchers::ContainsSubstring;

namespace {

const char *kWaterXyz = "3\nwater, experimental geometry\n"
                        "O  0.0000  0.0000  0.0000\n"
                        "H  0.7572  0.0000  0.5864\n"
                        "H -0.7572  0.0000  0.5864\n";

const char *kTinyChgcar = "handcrafted test density\n"
                          "   1.0\n"
                          " 10.0  0.0  0.0\n"
                          "  0.0 10.0  0.0\n"
                          "  0.0  0.0 10.0\n"
                          "   O   H\n"
                          "   1   2\n"
                          "Direct\n"
                          " 0.50 0.50 0.50\n"
                          " 0.57 0.50 0.55\n"
                          " 0.43 0.50 0.55\n"
                          "\n"
                          " 2 2 2\n"
                          " 1.0 2.0 3.0 4.0 5.0\n"
                          " 6.0 7.0 8.0\n"
                          "augmentation occupancies   1  4\n"
                          " 0.1 0.2 0.3 0.4\n";

} // namespace

TEST_CASE("xyz parsing", "[io]") {
  SECTION("single atom") {
    const auto mol = io::parse_xyz("1\n\nH 0 0 0\n");
    REQUIRE(mol.size() == 1);
    CHECK(mol.atoms[0].z == 1);
    CHECK(mol.atoms[0].position == geom::Vec3::Zero());
  }

  SECTION("water fixture") {
    const auto mol = io::parse_xyz(kWaterXyz);
    REQUIRE(mol.size() == 3);
    CHECK(mol.atoms[0].z == 8);
    CHECK(mol.atoms[1].z == 1);
    CHECK(mol.atoms[2].position.x() == -0.7572);
    CHECK(mol.atoms[1].position.z() == 0.5864);
  }

  SECTION("count mismatch reports the failing line") {
    CHECK_THROWS_WITH(io::parse_xyz("3\n\nH 0 0 0\nH 1 0 0\n"),
                      ContainsSubstring("expected 3 atoms"));
  }

  SECTION("unknown element reports the line number") {
    CHECK_THROWS_WITH(io::parse_xyz("1\n\nXx 0 0 0\n"),
                      ContainsSubstring("line 3") &&
                          ContainsSubstring("unknown element"));
  }

  SECTION("malformed coordinate") {
    CHECK_THROWS_WITH(io::parse_xyz("1\n\nH 0 zero 0\n"),
                      ContainsSubstring("malformed number"));
  }

  SECTION("round trip through write_xyz") {
    const auto mol = io::parse_xyz(io::write_xyz(water(), "w"));
    REQUIRE(mol.size() == 3);
    CHECK((mol.atoms[1].position - water().atoms[1].position).norm() < 1e-9);
  }
}

TEST_CASE("chgcar parsing", "[io]") {
  const auto [mol, grid] = io::parse_chgcar(kTinyChgcar);

  SECTION("atoms and lattice") {
    REQUIRE(mol.size() == 3);
    CHECK(mol.atoms[0].z == 8);
    CHECK(mol.atoms[0].position.isApprox(geom::Vec3(5, 5, 5), 1e-12));
    REQUIRE(mol.cell.has_value());
    CHECK(*mol.cell == 10.0 * geom::Mat3::Identity());
  }

  SECTION("values are volume-normalized, first index fastest") {
    REQUIRE(grid.spec.shape == std::array<int, 3>{2, 2, 2});
    REQUIRE(grid.values.size() == 8);
    for (int n = 0; n < 8; ++n)
      CHECK(grid.values[n] == Catch::Approx((n + 1) / 1000.0).epsilon(1e-14));
    // index (1,0,0) must be the second stored value
    CHECK(grid.values[grid.index(1, 0, 0)] ==
          Catch::Approx(2.0 / 1000.0).epsilon(1e-14));
    CHECK(grid.values[grid.index(0, 0, 1)] ==
          Catch::Approx(5.0 / 1000.0).epsilon(1e-14));
  }

  SECTION("truncated value block is rejected") {
    std::string truncated(kTinyChgcar);
    truncated = truncated.substr(0, truncated.find("6.0"));
    CHECK_THROWS_WITH(io::parse_chgcar(truncated),
                      ContainsSubstring("unexpected end of file"));
  }

  SECTION("cartesian coordinate mode") {
    std::string cart(kTinyChgcar);
    cart.replace(cart.find("Direct"), 6, "Cartesian");
    const auto [cmol, cgrid] = io::parse_chgcar(cart);
    CHECK(cmol.atoms[0].position.isApprox(geom::Vec3(0.5, 0.5, 0.5), 1e-12));
  }
}

TEST_CASE("chgcar writing round trip", "[io]") {
  SECTION("zero grid emits the full value block") {
    mix::DensityGrid grid;
    grid.spec.cell = 10.0 * mix::Mat3::Identity();
    grid.spec.shape = {3, 3, 3};
    grid.values.assign(27, 0.0);
    geom::Molecule mol{{{8, {5, 5, 5}}}, grid.spec.cell};
    const auto text = io::write_chgcar(mol, grid);
    const auto [rmol, rgrid] = io::parse_chgcar(text);
    REQUIRE(rgrid.values.size() == 27);
    for (const double v : rgrid.values)
      CHECK(v == 0.0);
  }

  SECTION("values, lattice and coordinates survive a round trip") {
    std::mt19937_64 gen(53);
    mix::DensityGrid grid;
    grid.spec.cell = 9.5 * mix::Mat3::Identity();
    grid.spec.cell(1, 0) = 0.4;
    grid.spec.shape = {6, 5, 4};
    grid.values.resize(grid.spec.voxel_count());
    for (auto &v : grid.values)
      v = rng::uniform(gen, 0.0, 0.7);

    geom::Molecule mol = water();
    for (auto &a : mol.atoms)
      a.position += geom::Vec3(4.5, 4.5, 4.5);
    mol.cell = grid.spec.cell;

    const auto text = io::write_chgcar(mol, grid);
    const auto [rmol, rgrid] = io::parse_chgcar(text);

    REQUIRE(rgrid.spec.shape == grid.spec.shape);
    CHECK((rgrid.spec.cell - grid.spec.cell).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(rmol.size() == 3);
    CHECK((rmol.atoms[0].position - mol.atoms[0].position).norm() < 1e-12);
    double err = 0.0, norm = 0.0;
    for (size_t n = 0; n < grid.values.size(); ++n) {
      err += std::abs(rgrid.values[n] - grid.values[n]);
      norm += std::abs(grid.values[n]);
    }
    CHECK(err / norm < 1e-10); // 11 significant digits in the file
    CHECK(mix::integrate(rgrid) ==
          Catch::Approx(mix::integrate(grid)).epsilon(1e-9));
  }

  SECTION("interleaved species are regrouped") {
    mix::DensityGrid grid;
    grid.spec.cell = 8.0 * mix::Mat3::Identity();
    grid.spec.shape = {2, 2, 2};
    grid.values.assign(8, 0.125);
    geom::Molecule mol{{{1, {1, 1, 1}}, {8, {2, 2, 2}}, {1, {3, 3, 3}}},
                       grid.spec.cell};
    const auto [rmol, rgrid] = io::parse_chgcar(io::write_chgcar(mol, grid));
    REQUIRE(rmol.size() == 3);
    CHECK(rmol.atoms[0].z == 1);
    CHECK(rmol.atoms[1].z == 1);
    CHECK(rmol.atoms[2].z == 8);
    CHECK(rmol.atoms[1].position.isApprox(geom::Vec3(3, 3, 3), 1e-9));
  }
}

TEST_CASE("mixture document round trip", "[io]") {
  SECTION("empty mixture") {
    const auto [m, n_elec] = io::read_mixture(io::write_mixture({}, 0.0));
    CHECK(m.gaussians.empty());
    CHECK(m.scale == 1.0);
    CHECK(n_elec == 0.0);
  }

  SECTION("random mixture is bit-identical after a round trip") {
    std::mt19937_64 gen(59);
    mix::Mixture m;
    m.scale = 1.2345678901234567;
    m.clamp_negative = false;
    for (int g = 0; g < 32; ++g) {
      mix::Mat3 lower = mix::Mat3::Zero();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < r; ++c)
          lower(r, c) = rng::normal(gen) * 0.1;
        lower(r, r) = 0.2 + 0.5 * rng::uniform01(gen);
      }
      m.gaussians.push_back(mix::Gaussian::from_cholesky(
          rng::normal(gen), 3.0 * mix::Vec3(rng::normal(gen),
                                            rng::normal(gen),
                                            rng::normal(gen)),
          lower));
    }
    const auto [r, n_elec] = io::read_mixture(io::write_mixture(m, 8.0));
    CHECK(n_elec == 8.0);
    CHECK(r.scale == m.scale);
    CHECK(r.clamp_negative == m.clamp_negative);
    REQUIRE(r.gaussians.size() == m.gaussians.size());
    for (size_t g = 0; g < m.gaussians.size(); ++g) {
      CHECK(r.gaussians[g].w == m.gaussians[g].w);
      CHECK(r.gaussians[g].mu == m.gaussians[g].mu);
      CHECK(r.gaussians[g].sigma == m.gaussians[g].sigma);
    }
  }

  SECTION("rejects documents with invalid covariances") {
    const std::string bad = "floro mixture format 1\n"
                            "n_elec 8\nscale 1\nclamp_negative 1\ncount 1\n"
                            "1 0 0 0 1 0 0 -0.5 0 1\n";
    CHECK_THROWS_WITH(io::read_mixture(bad),
                      ContainsSubstring("invalid gaussian"));
  }

  SECTION("rejects unknown schemas") {
    CHECK_THROWS_WITH(io::read_mixture("floro mixture format 9\n"),
                      ContainsSubstring("schema"));
  }
}
