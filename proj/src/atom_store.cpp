#include "uva/atom_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "uva/common.hpp"

namespace uva {

namespace {

void check_field(const Atom& a, std::string_view name, std::string_view value) {
  if (value.find('|') != std::string_view::npos)
    throw validation_error("atom " + a.aui + ": '|' inside " + std::string(name));
  if (value.find('\n') != std::string_view::npos || value.find('\t') != std::string_view::npos)
    throw validation_error("atom " + a.aui + ": tab or newline inside " + std::string(name));
}

}  // namespace

AtomStore AtomStore::from_atoms(std::vector<Atom> atoms) {
  AtomStore store;
  store.atoms_ = std::move(atoms);
  for (AtomIndex i = 0; i < store.atoms_.size(); ++i) {
    const Atom& a = store.atoms_[i];
    if (a.aui.empty()) throw validation_error("atom #" + std::to_string(i + 1) + ": empty AUI");
    if (trim(a.str).empty()) throw validation_error("atom " + a.aui + ": empty STR");
    if (a.src.empty()) throw validation_error("atom " + a.aui + ": empty SRC");
    if (a.cui.empty()) throw validation_error("atom " + a.aui + ": empty CUI");
    check_field(a, "AUI", a.aui);
    check_field(a, "STR", a.str);
    check_field(a, "SRC", a.src);
    check_field(a, "CUI", a.cui);
    if (!store.by_aui_.emplace(a.aui, i).second) throw validation_error("duplicate AUI " + a.aui);
    store.by_cui_[a.cui].push_back(i);
    store.by_src_[a.src].push_back(i);
  }
  auto by_aui = [&store](AtomIndex x, AtomIndex y) { return store.atoms_[x].aui < store.atoms_[y].aui; };
  for (auto& [_, members] : store.by_cui_) std::sort(members.begin(), members.end(), by_aui);
  for (auto& [_, members] : store.by_src_) std::sort(members.begin(), members.end(), by_aui);
  return store;
}

std::optional<AtomIndex> AtomStore::find(std::string_view aui) const {
  auto it = by_aui_.find(aui);
  if (it == by_aui_.end()) return std::nullopt;
  return it->second;
}

const Atom& AtomStore::at(std::string_view aui) const {
  auto idx = find(aui);
  if (!idx) throw validation_error("unknown AUI " + std::string(aui));
  return atoms_[*idx];
}

std::vector<std::string> AtomStore::concept_members(std::string_view cui) const {
  std::vector<std::string> out;
  auto it = by_cui_.find(cui);
  if (it == by_cui_.end()) return out;
  out.reserve(it->second.size());
  for (AtomIndex i : it->second) out.push_back(atoms_[i].aui);
  return out;
}

AtomStore ingest_atoms(std::istream& in) {
  std::vector<Atom> atoms;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, '|');
    if (fields.size() != 4)
      throw ParseError(lineno, "expected 4 '|'-separated fields (AUI|STR|SRC|CUI), got " +
                                   std::to_string(fields.size()));
    Atom a{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), std::string(fields[3])};
    if (a.aui.empty()) throw ParseError(lineno, "empty AUI");
    if (trim(a.str).empty()) throw ParseError(lineno, "empty STR for atom " + a.aui);
    if (a.src.empty() || a.cui.empty()) throw ParseError(lineno, "empty SRC or CUI for atom " + a.aui);
    if (a.str.find('\t') != std::string::npos) throw ParseError(lineno, "tab inside STR for atom " + a.aui);
    auto [it, inserted] = seen.emplace(a.aui, lineno);
    if (!inserted)
      throw ParseError(lineno, "duplicate AUI " + a.aui + " (first seen on line " + std::to_string(it->second) + ")");
    atoms.push_back(std::move(a));
  }
  if (in.bad()) throw io_error("read error while ingesting atoms");
  return AtomStore::from_atoms(std::move(atoms));
}

AtomStore ingest_atoms_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open atom file " + path);
  return ingest_atoms(in);
}

void write_atoms(const AtomStore& store, std::ostream& out) {
  for (const Atom& a : store.atoms()) out << a.aui << '|' << a.str << '|' << a.src << '|' << a.cui << '\n';
}

ValidationReport validate(const AtomStore& store) {
  ValidationReport r;
  r.atoms = store.size();
  r.concepts = store.by_cui().size();
  r.sources = store.by_src().size();
  for (const auto& [_, members] : store.by_cui())
    if (members.size() == 1) ++r.singleton_concepts;
  for (const auto& [src, members] : store.by_src()) r.atoms_per_source[src] = members.size();
  return r;
}

}  // namespace uva
