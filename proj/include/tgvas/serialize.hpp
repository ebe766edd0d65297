#ifndef TGVAS_SERIALIZE_HPP
#define TGVAS_SERIALIZE_HPP

#include <string>

#include "json.hpp"
#include "tgvas/klm.hpp"

namespace tgvas {

// Self-describing nested certificate records. Rules are written as grammar
// text; encoded symbols carry their configurations explicitly.
nlohmann::ordered_json klm_to_json(const Grammar& g, const KlmTree& kt);
KlmTree klm_from_json(const Grammar& g, const nlohmann::ordered_json& j);

std::string klm_to_text(const Grammar& g, const KlmTree& kt);
KlmTree klm_from_text(const Grammar& g, const std::string& text);

// Parenthesized tree text with real symbol names.
std::string tree_text_named(const DerivationTree& t, const Grammar& g,
                            const Configs* cfg = nullptr);

}  // namespace tgvas

#endif
