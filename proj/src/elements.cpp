#include "floro/elements.h"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace floro {

namespace {

struct ElementData {
  const char *symbol;
  double mass;
  int valence;
  int occ[3]; // 1s, 2s, 2p
};

const std::unordered_map<int, ElementData> &table() {
  static const std::unordered_map<int, ElementData> t = {
      {1, {"H", 1.008, 1, {1, 0, 0}}},  {6, {"C", 12.011, 4, {2, 2, 2}}},
      {7, {"N", 14.007, 5, {2, 2, 3}}}, {8, {"O", 15.999, 6, {2, 2, 4}}},
      {9, {"F", 18.998, 7, {2, 2, 5}}},
  };
  return t;
}

const ElementData &lookup(int z) {
  auto it = table().find(z);
  if (it == table().end())
    throw std::invalid_argument("unsupported element Z=" + std::to_string(z));
  return it->second;
}

} // namespace

bool element_supported(int z) { return table().count(z) != 0; }

double atomic_mass(int z) { return lookup(z).mass; }

int valence_electrons(int z) { return lookup(z).valence; }

void shell_occupancies(int z, int out[3]) {
  const auto &e = lookup(z);
  out[0] = e.occ[0];
  out[1] = e.occ[1];
  out[2] = e.occ[2];
}

void shell_capacities(int out[3]) {
  out[0] = 2;
  out[1] = 2;
  out[2] = 6;
}

int neutron_count(int z) {
  return static_cast<int>(std::lround(atomic_mass(z))) - z;
}

const std::string &element_symbol(int z) {
  static const std::unordered_map<int, std::string> symbols = {
      {1, "H"}, {6, "C"}, {7, "N"}, {8, "O"}, {9, "F"}};
  auto it = symbols.find(z);
  if (it == symbols.end())
    throw std::invalid_argument("unsupported element Z=" + std::to_string(z));
  return it->second;
}

int element_number(const std::string &symbol) {
  static const std::unordered_map<std::string, int> numbers = {
      {"H", 1}, {"C", 6}, {"N", 7}, {"O", 8}, {"F", 9}};
  auto it = numbers.find(symbol);
  return it == numbers.end() ? 0 : it->second;
}

} // namespace floro
