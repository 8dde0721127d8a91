#include "doctest.h"

#include "bda/errors.hpp"
#include "bda/numerics.hpp"

using namespace bda;

TEST_CASE("project_box clamps both sides") {
  Vector v(2);
  v << 2.0, -3.0;
  const Vector p = project_box(v, BoxRegion::symmetric(2, 1.0));
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -1.0);
}

TEST_CASE("project_box is identity on interior points") {
  Vector v(2);
  v << 0.5, 0.2;
  CHECK(project_box(v, BoxRegion::symmetric(2, 1.0)) == v);
}

TEST_CASE("project_box rejects dimension mismatch and non-finite input") {
  CHECK_THROWS_AS(project_box(Vector::Zero(3), BoxRegion::symmetric(2, 1.0)),
                  ContractViolation);
  Vector v(2);
  v << std::nan(""), 0.0;
  CHECK_THROWS_AS(project_box(v, BoxRegion::symmetric(2, 1.0)), NumericalError);
}

TEST_CASE("projection is nonexpansive and idempotent") {
  RngStream rng(7);
  const auto box = BoxRegion::symmetric(4, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const Vector u = rng.uniform_vector(4, -3.0, 3.0);
    const Vector v = rng.uniform_vector(4, -3.0, 3.0);
    const Vector pu = project_box(u, box);
    CHECK((pu - project_box(v, box)).norm() <= (u - v).norm());
    CHECK(project_box(pu, box) == pu);
  }
}

TEST_CASE("whole space projection and active mask") {
  const auto whole = BoxRegion::whole(3);
  CHECK(whole.is_whole_space());
  CHECK_FALSE(whole.is_compact());
  CHECK_THROWS_AS(whole.diameter(), CapabilityError);
  Vector v = Vector::Constant(3, 1e9);
  CHECK(project_box(v, whole) == v);

  const auto box = BoxRegion::uniform(3, 0.0, 1.0);
  Vector w(3);
  w << -0.5, 0.5, 1.0;
  const auto act = projection_active(w, box);
  CHECK(act[0]);
  CHECK_FALSE(act[1]);
  CHECK_FALSE(act[2]);
  CHECK(box.diameter() == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("box with inverted bounds is rejected") {
  CHECK_THROWS_AS(BoxRegion::uniform(2, 1.0, -1.0), ContractViolation);
}

TEST_CASE("rng streams are deterministic per seed") {
  RngStream a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double da = a.uniform();
    CHECK(da == b.uniform());
    if (i < 10 && da != c.uniform()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("uniform draws have mean near one half") {
  RngStream rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 1e5 - 0.5) < 0.01);
}

TEST_CASE("normal draws have unit variance") {
  RngStream rng(3);
  double s = 0.0, s2 = 0.0;
  const int N = 100000;
  for (int i = 0; i < N; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / N) < 0.02);
  CHECK(std::abs(s2 / N - 1.0) < 0.03);
}

TEST_CASE("below stays in range") {
  RngStream rng(5);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7u);
}
