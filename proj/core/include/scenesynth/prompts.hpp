#pragma once

// Fixed instruction templates sent to the chat endpoint.

#include <string>
#include <string_view>

namespace scenesynth::refiner {

inline constexpr std::string_view kPafiPlaceholder = "{{user_input_audio}}";
inline constexpr std::string_view kRefinerPlaceholder = "{{user_input}}";

/// Acoustic-fidelity judge; expects {"score": int, "reason": string}.
std::string_view pafi_prompt_template() noexcept;
/// Free text to structured six-field JSON.
std::string_view refiner_prompt_template() noexcept;

/// Replaces every occurrence of `placeholder` with `value`.
std::string render_prompt(std::string_view tmpl, std::string_view placeholder,
                          std::string_view value);

}  // namespace scenesynth::refiner
