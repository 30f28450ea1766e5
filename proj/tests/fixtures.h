#pragma once

#include "floro/geometry.h"

// Shared molecular fixtures (positions in Å, experimental gas-phase values).

inline floro::geom::Molecule water() {
  return {{{8, {0.0, 0.0, 0.0}},
           {1, {0.7572, 0.0, 0.5864}},
           {1, {-0.7572, 0.0, 0.5864}}},
          {}};
}

inline floro::geom::Molecule ammonia() {
  return {{{7, {0.0, 0.0, 0.0}},
           {1, {0.9375295737, 0.0, -0.3810279498}},
           {1, {-0.4687647868, 0.8119244276, -0.3810279498}},
           {1, {-0.4687647868, -0.8119244276, -0.3810279498}}},
          {}};
}

inline floro::geom::Molecule formaldehyde() {
  return {{{6, {0.0, 0.0, 0.0}},
           {8, {0.0, 0.0, 1.205}},
           {1, {0.9428487331, 0.0, -0.5876710530}},
           {1, {-0.9428487331, 0.0, -0.5876710530}}},
          {}};
}

inline floro::geom::Molecule methane() {
  const double a = 0.6293117934;
  return {{{6, {0.0, 0.0, 0.0}},
           {1, {a, a, a}},
           {1, {a, -a, -a}},
           {1, {-a, a, -a}},
           {1, {-a, -a, a}}},
          {}};
}

// Four atoms with no point-group symmetry: distinct MOI spectra and a
// center of mass off every eigenvector, i.e. no canonicalization ties.
inline floro::geom::Molecule generic4() {
  return {{{8, {0.0, 0.0, 0.0}},
           {1, {0.96, 0.10, 0.05}},
           {1, {-0.20, 0.90, -0.30}},
           {6, {0.30, -0.40, 0.80}}},
          {}};
}
