#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "infopart/error.hpp"

namespace infopart {

/// Finite string over {0, ..., alphabet_size - 1}.
struct SymbolSequence {
  std::vector<std::uint8_t> symbols;
  int alphabet_size = 2;

  SymbolSequence() = default;
  SymbolSequence(std::vector<std::uint8_t> s, int m) : symbols(std::move(s)), alphabet_size(m) {
    validate();
  }

  std::size_t size() const { return symbols.size(); }
  bool empty() const { return symbols.empty(); }
  std::uint8_t operator[](std::size_t i) const { return symbols[i]; }

  /// Contiguous sub-window [offset, offset + length).
  SymbolSequence window(std::size_t offset, std::size_t length) const {
    require(offset + length <= symbols.size(), "window exceeds sequence length");
    SymbolSequence out;
    out.alphabet_size = alphabet_size;
    out.symbols.assign(symbols.begin() + static_cast<std::ptrdiff_t>(offset),
                       symbols.begin() + static_cast<std::ptrdiff_t>(offset + length));
    return out;
  }

  void validate() const {
    require(alphabet_size >= 1 && alphabet_size <= 256, "alphabet size must be in [1, 256]");
    for (auto s : symbols)
      require(s < alphabet_size, "symbol outside the declared alphabet");
  }
};

}  // namespace infopart
