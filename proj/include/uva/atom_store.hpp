#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uva {

/// One term occurrence. `cui` is label-only metadata: it decides synonymy
/// and is never fed to a model.
struct Atom {
  std::string aui;
  std::string str;
  std::string src;
  std::string cui;

  bool operator==(const Atom&) const = default;
};

using AtomIndex = std::size_t;

/// Validated, immutable collection of atoms with concept and source indices.
/// Atoms keep ingestion order; index buckets are sorted by AUI.
class AtomStore {
 public:
  AtomStore() = default;

  /// Validates the invariants (unique AUI, non-blank STR, no field
  /// separators inside fields) and builds the indices.
  static AtomStore from_atoms(std::vector<Atom> atoms);

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  bool empty() const noexcept { return atoms_.empty(); }
  const Atom& operator[](AtomIndex i) const { return atoms_[i]; }

  std::optional<AtomIndex> find(std::string_view aui) const;
  const Atom& at(std::string_view aui) const;

  /// cui -> member atom indices (sorted by AUI).
  const std::map<std::string, std::vector<AtomIndex>, std::less<>>& by_cui() const noexcept { return by_cui_; }
  /// src -> member atom indices (sorted by AUI).
  const std::map<std::string, std::vector<AtomIndex>, std::less<>>& by_src() const noexcept { return by_src_; }

  /// AUIs sharing `cui`, lexicographic order; empty for an unknown concept.
  std::vector<std::string> concept_members(std::string_view cui) const;

  bool operator==(const AtomStore& other) const { return atoms_ == other.atoms_; }

 private:
  std::vector<Atom> atoms_;
  std::map<std::string, AtomIndex, std::less<>> by_aui_;
  std::map<std::string, std::vector<AtomIndex>, std::less<>> by_cui_;
  std::map<std::string, std::vector<AtomIndex>, std::less<>> by_src_;
};

/// Reads `AUI|STR|SRC|CUI` records. `#` comment lines and blank lines are skipped.
AtomStore ingest_atoms(std::istream& in);
AtomStore ingest_atoms_file(const std::string& path);
void write_atoms(const AtomStore& store, std::ostream& out);

struct ValidationReport {
  std::size_t atoms = 0;
  std::size_t concepts = 0;
  std::size_t sources = 0;
  std::size_t singleton_concepts = 0;
  std::map<std::string, std::size_t> atoms_per_source;
};

ValidationReport validate(const AtomStore& store);

}  // namespace uva
