#pragma once

#include <cstdint>
#include <vector>

#include "uva/atom_store.hpp"

namespace uva::synth {

/// Shape of a generated terminology. Concepts are (modifier?, site, finding)
/// combinations drawn from a shared vocabulary, so distinct concepts overlap
/// lexically; each concept gets lexical variants (reordering, plurals,
/// synonym and adjective substitution, qualifiers, case changes) spread over
/// the pseudo-sources.
struct CorpusSpec {
  std::size_t concepts = 200;
  std::size_t min_variants = 2;
  std::size_t max_variants = 5;
  std::size_t sources = 3;
  std::uint64_t seed = 20200;
};

std::vector<Atom> generate_corpus(const CorpusSpec& spec);

}  // namespace uva::synth
