#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kalikow/model.hpp"
#include "kalikow/models.hpp"

namespace kalikow {

/// Family name plus the raw keys of its section, as read from a model file.
/// Relative paths inside params resolve against base_dir.
struct ModelConfig {
    std::string family;
    std::map<std::string, std::string> params;
    std::filesystem::path base_dir;

    friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
        return a.family == b.family && a.params == b.params;
    }
};

/// INI with [model] family = markov | infinite_order | hawkes | gl_linear | explicit
/// and one section named after the family. Throws ConfigError.
ModelConfig parse_model_config(std::istream& in, const std::filesystem::path& base_dir = {});
ModelConfig load_model_config(const std::filesystem::path& path);
void write_model_config(const ModelConfig& cfg, std::ostream& out);

/// Throws ConfigError for bad keys/values, ModelError for invalid models.
KalikowModel build_model(const ModelConfig& cfg);
/// Loads either an INI model file or an atom-list file (extension .atoms).
KalikowModel load_model(const std::filesystem::path& path);

/// Atom list: one line per atom, "neuron, weight, [(j,s),...], kernel" with
/// kernel one of table{v0 v1 ...}, linear{a; b1 b2 ...}, gated{k, exc|inh}.
/// The empty neighborhood is written [] with a one-entry table holding p^empty.
/// An optional first line "homogeneous" marks a translation-invariant model.
std::string serialize_atom_list(const KalikowModel& model);
KalikowModel parse_atom_list(std::istream& in);

/// Rows "j,i,lag,weight"; a header line is skipped.
std::vector<HawkesInteraction> read_hawkes_csv(std::istream& in);
void write_hawkes_csv(const std::vector<HawkesInteraction>& h, std::ostream& out);

/// Documented keys and defaults of every model section.
std::string explain_model_config();

}  // namespace kalikow
