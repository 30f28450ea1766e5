#pragma once

#include <string>

namespace floro {

// Supported element set: H, C, N, O, F.
bool element_supported(int z);

// CODATA standard atomic weight, amu.
double atomic_mass(int z);

// Valence electron count (electrons outside the frozen core):
// H 1, C 4, N 5, O 6, F 7.
int valence_electrons(int z);

// Subshell occupancies (1s, 2s, 2p) from the Aufbau filling.
void shell_occupancies(int z, int out[3]);

// Subshell capacities (2, 2, 6).
void shell_capacities(int out[3]);

// Neutron count = round(standard atomic weight) - Z.
int neutron_count(int z);

const std::string &element_symbol(int z);

// Returns 0 for unknown symbols.
int element_number(const std::string &symbol);

} // namespace floro
