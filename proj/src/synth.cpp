#include "uva/synth.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <set>
#include <string>
#include <tuple>

#include "uva/common.hpp"

namespace uva::synth {

namespace {

struct Site {
  const char* noun;
  const char* adjective;
};

struct Finding {
  const char* word;
  const char* synonym;
};

constexpr std::array<Site, 24> kSites = {{
    {"kidney", "renal"},     {"heart", "cardiac"},       {"lung", "pulmonary"},   {"liver", "hepatic"},
    {"stomach", "gastric"},  {"skin", "cutaneous"},      {"brain", "cerebral"},   {"bone", "osseous"},
    {"eye", "ocular"},       {"ear", "otic"},            {"nose", "nasal"},       {"mouth", "oral"},
    {"chest", "thoracic"},   {"bladder", "vesical"},     {"colon", "colonic"},    {"spine", "spinal"},
    {"joint", "articular"},  {"muscle", "muscular"},     {"vein", "venous"},      {"artery", "arterial"},
    {"breast", "mammary"},   {"throat", "pharyngeal"},   {"tooth", "dental"},     {"nerve", "neural"},
}};

constexpr std::array<Finding, 20> kFindings = {{
    {"pain", "ache"},           {"swelling", "edema"},          {"bleeding", "hemorrhage"},
    {"infection", "sepsis"},    {"tumor", "neoplasm"},          {"injury", "trauma"},
    {"ulcer", "ulceration"},    {"cyst", "pseudocyst"},         {"stone", "calculus"},
    {"abscess", "suppuration"}, {"fibrosis", "scarring"},       {"atrophy", "wasting"},
    {"necrosis", "infarction"}, {"spasm", "cramp"},             {"disorder", "disease"},
    {"obstruction", "blockage"}, {"rupture", "tear"},           {"deformity", "malformation"},
    {"stenosis", "narrowing"},  {"laceration", "cut"},
}};

// Index 0 is "no modifier".
constexpr std::array<const char*, 11> kModifiers = {
    "", "acute", "chronic", "left", "right", "congenital", "recurrent", "severe", "mild", "primary", "secondary",
};

constexpr std::array<const char*, 3> kQualifiers = {" (finding)", " (disorder)", " NOS"};

std::string plural(const std::string& w) {
  if (w.size() > 3 && w.ends_with("sis")) return w.substr(0, w.size() - 2) + "es";
  return w + "s";
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string with_mod(const std::string& mod, const std::string& rest) { return mod.empty() ? rest : mod + " " + rest; }

constexpr std::size_t kTemplates = 9;

std::string variant(std::size_t tmpl, const std::string& mod, const Site& site, const Finding& f, Rng& rng) {
  const std::string noun = site.noun, adj = site.adjective, word = f.word, syn = f.synonym;
  switch (tmpl) {
    case 0: return capitalize(with_mod(mod, noun + " " + word));
    case 1: return capitalize(word + " of " + with_mod(mod, noun));
    case 2: return capitalize(with_mod(mod, adj + " " + word));
    case 3: return capitalize(with_mod(mod, noun + " " + plural(word)));
    case 4: return capitalize(with_mod(mod, adj + " " + syn));
    case 5: return mod.empty() ? capitalize(noun + " " + word + ", unspecified") : capitalize(noun + " " + word + ", " + mod);
    case 6: return capitalize(with_mod(mod, noun + " " + word)) + kQualifiers[rng.below(kQualifiers.size())];
    case 7: return upper(with_mod(mod, noun + " " + word));
    default: return capitalize(syn + " of " + with_mod(mod, noun));
  }
}

std::string padded(char prefix, std::size_t n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%07zu", prefix, n);
  return buf;
}

}  // namespace

std::vector<Atom> generate_corpus(const CorpusSpec& spec) {
  const std::size_t space = kSites.size() * kFindings.size() * kModifiers.size();
  if (spec.concepts == 0 || spec.concepts > space)
    throw invalid_argument("concept count must lie in [1, " + std::to_string(space) + "]");
  if (spec.min_variants < 1 || spec.min_variants > spec.max_variants || spec.max_variants > kTemplates)
    throw invalid_argument("variant counts must satisfy 1 <= min <= max <= " + std::to_string(kTemplates));
  if (spec.sources == 0 || spec.sources > 26) throw invalid_argument("source count must lie in [1, 26]");

  Rng rng(derive_seed(spec.seed, "synth"));
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> used;
  std::vector<Atom> atoms;
  std::size_t next_aui = 1;
  for (std::size_t c = 0; c < spec.concepts; ++c) {
    std::tuple<std::size_t, std::size_t, std::size_t> key;
    do {
      key = {rng.below(kModifiers.size()), rng.below(kSites.size()), rng.below(kFindings.size())};
    } while (!used.insert(key).second);
    const auto [m, s, f] = key;
    const std::string cui = padded('C', 1000 + c);

    const std::size_t k = spec.min_variants + rng.below(spec.max_variants - spec.min_variants + 1);
    std::vector<std::size_t> templates;
    for (std::size_t t = 1; t < kTemplates; ++t) templates.push_back(t);
    rng.shuffle(templates);
    templates.insert(templates.begin(), 0);

    const std::size_t first_source = rng.below(spec.sources);
    std::set<std::string> seen;
    for (std::size_t v = 0; v < k; ++v) {
      std::string str = variant(templates[v], kModifiers[m], kSites[s], kFindings[f], rng);
      if (!seen.insert(str).second) continue;
      const std::string src = std::string("SRC") + static_cast<char>('A' + (first_source + v) % spec.sources);
      atoms.push_back({padded('A', next_aui++), std::move(str), src, cui});
    }
  }
  return atoms;
}

}  // namespace uva::synth
