#include "ragforget/promptgen.hpp"

#include <charconv>

#include "ragforget/errors.hpp"

namespace ragforget {

namespace {

// Templates as published, including their uneven quoting and spacing.
const char* kWithProfileTemplate =
    R"__(I want you to predict the user‘s rating for each movie in the candidate list on a scale from 1 to 100, based on the user’s profile and movie interaction history. Follow these instructions carefully:
1. Use the given user profile and historical movie interaction records to predict how much the user would like each movie in the candidate list. The higher the score, the more likely the user will enjoy the movie.
2. The output must be in valid JSON format, where each movie ID is paired with its predicted score.  The format should be:
{ "movie_id1": score1,
"movie_id2" : score2,
...}
3. Ensure that all movie IDs in the candidate list are included exactly once in the output.
4. Do not include any additional text, explanation, or comments outside the JSON object.
### User Profile:
{user_profile_text}.
### Movie Interaction History:
The user's historical movie interaction records include:{history_movies}
### Candidate List:
{candidate_list}
Predict and output the ratings in the required JSON format.)__";

const char* kHistoryOnlyTemplate =
    R"__(I want you to predict the user‘s rating for each movie in the candidate list on a scale from 1 to 100,  based on the user’s interaction history. Follow these instructions carefully:
1. Use the given user‘s historical movie interaction records to predict how much the user would like each movie in the candidate list. The higher the score, the more likely the user will enjoy the movie.
2. The output must be in valid JSON format, where each movie ID is paired with its predicted score.
The format should be:
{ "movie_id1" : score1,
  "movie_id2" : score2,
...}
3. Ensure that all movie IDs in the candidate list are included exactly once in the output.
4. Do not include any additional text, explanation, or comments outside the JSON object.
### Movie Interaction History:
The user's historical movie interaction records include:
{history_movies}
### Candidate List: {candidate_list}
Predict and output the ratings in the required JSON format.)__";

void replace_once(std::string& text, std::string_view placeholder, std::string_view value) {
    const std::size_t pos = text.find(placeholder);
    if (pos == std::string::npos) return;
    text.replace(pos, placeholder.size(), value);
}

}  // namespace

AuxContext AuxContext::from_metadata(const ItemMetadata& meta) {
    AuxContext aux;
    aux.item_titles = meta.titles;
    aux.item_categories = meta.categories.item_to_categories;
    aux.item_year = meta.years;
    return aux;
}

std::string render_history_line(const Interaction& interaction, const AuxContext& aux) {
    std::string title;
    if (auto it = aux.item_titles.find(interaction.item); it != aux.item_titles.end()) {
        title = it->second;
    } else {
        title = "item " + std::to_string(interaction.item);
    }

    std::string parenthetical;
    if (auto it = aux.item_categories.find(interaction.item);
        it != aux.item_categories.end() && !it->second.empty()) {
        for (const auto& c : it->second) {
            if (!parenthetical.empty()) parenthetical += ", ";
            parenthetical += c;
        }
    }
    if (auto it = aux.item_year.find(interaction.item); it != aux.item_year.end()) {
        if (!parenthetical.empty()) parenthetical += ", ";
        parenthetical += std::to_string(it->second);
    }

    std::string line = "\"" + title + "\"";
    if (!parenthetical.empty()) line += " (" + parenthetical + ")";
    line += " — rated " + std::to_string(interaction.rating) + "/5";
    return line;
}

Prompt build_prompt(const CandidateList& candidates, const FilteredHistory& history,
                    const AuxContext& aux) {
    if (candidates.items.empty()) throw EmptyCandidates("cannot build a prompt without candidates");

    Prompt prompt;
    prompt.candidate_ids = candidates.items;
    prompt.template_kind = aux.user_profile_text && !aux.user_profile_text->empty()
                               ? TemplateKind::with_profile
                               : TemplateKind::history_only;
    prompt.text = prompt.template_kind == TemplateKind::with_profile ? kWithProfileTemplate
                                                                     : kHistoryOnlyTemplate;

    std::string history_lines;
    for (const Interaction& r : history.kept) {
        if (!history_lines.empty()) history_lines += '\n';
        history_lines += render_history_line(r, aux);
    }
    std::string candidate_lines;
    for (ItemId id : candidates.items) {
        if (!candidate_lines.empty()) candidate_lines += '\n';
        candidate_lines += std::to_string(id) + ": \"";
        if (auto it = aux.item_titles.find(id); it != aux.item_titles.end()) {
            candidate_lines += it->second;
        } else {
            candidate_lines += "item " + std::to_string(id);
        }
        candidate_lines += '"';
    }

    if (prompt.template_kind == TemplateKind::with_profile)
        replace_once(prompt.text, "{user_profile_text}", *aux.user_profile_text);
    replace_once(prompt.text, "{history_movies}", history_lines);
    replace_once(prompt.text, "{candidate_list}", candidate_lines);

    prompt.token_estimate = static_cast<int>((prompt.text.size() + 3) / 4);
    return prompt;
}

std::vector<ItemId> parse_candidate_ids(const std::string& prompt_text) {
    std::vector<ItemId> ids;
    const std::string header = "### Candidate List:";
    std::size_t pos = prompt_text.find(header);
    if (pos == std::string::npos) return ids;
    pos += header.size();
    while (pos < prompt_text.size()) {
        std::size_t end = prompt_text.find('\n', pos);
        if (end == std::string::npos) end = prompt_text.size();
        std::string_view line(prompt_text.data() + pos, end - pos);
        while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
        ItemId id = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), id);
        if (ec == std::errc{} && ptr != line.data() && ptr < line.data() + line.size() &&
            *ptr == ':') {
            ids.push_back(id);
        }
        pos = end + 1;
    }
    return ids;
}

std::string history_section(const std::string& prompt_text) {
    const std::string start_marker = "### Movie Interaction History:";
    const std::string end_marker = "### Candidate List:";
    const std::size_t start = prompt_text.find(start_marker);
    if (start == std::string::npos) return {};
    const std::size_t end = prompt_text.find(end_marker, start);
    if (end == std::string::npos) return prompt_text.substr(start);
    return prompt_text.substr(start, end - start);
}

}  // namespace ragforget
