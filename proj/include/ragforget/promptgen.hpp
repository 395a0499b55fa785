#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragforget/backbone.hpp"
#include "ragforget/corpus.hpp"
#include "ragforget/retrieval.hpp"

namespace ragforget {

// Auxiliary context handed to the prompt: profile sentence plus item metadata.
struct AuxContext {
    std::optional<std::string> user_profile_text;
    std::unordered_map<ItemId, std::string> item_titles;
    std::unordered_map<ItemId, std::vector<std::string>> item_categories;
    std::unordered_map<ItemId, int> item_year;

    static AuxContext from_metadata(const ItemMetadata& meta);
};

enum class TemplateKind { with_profile, history_only };

struct Prompt {
    std::string text;
    std::vector<ItemId> candidate_ids;  // backbone order
    TemplateKind template_kind = TemplateKind::history_only;
    int token_estimate = 0;  // ceil(chars / 4)
};

// One line per kept interaction:
//   "<title>" (<categories>, <year>) — rated <rating>/5
// with missing metadata degrading to shorter forms.
std::string render_history_line(const Interaction& interaction, const AuxContext& aux);

Prompt build_prompt(const CandidateList& candidates, const FilteredHistory& history,
                    const AuxContext& aux);

// The ids rendered in the candidate section, parsed back out of the text.
std::vector<ItemId> parse_candidate_ids(const std::string& prompt_text);

// The history section substring (between its header and the candidate header);
// used by the leakage audit.
std::string history_section(const std::string& prompt_text);

}  // namespace ragforget
