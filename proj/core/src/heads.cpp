#include "unloc/heads.hpp"

#include "unloc/errors.hpp"

namespace unloc {

ConvTower::ConvTower(nn::ParameterStore& store, const std::string& name, int width,
                     int blocks, Rng& rng) {
  for (int b = 0; b < blocks; ++b) {
    const std::string block = name + ".block" + std::to_string(b);
    norms_.emplace_back(store, block + ".norm", "heads", width);
    convs_.emplace_back(store, block + ".conv", "heads", width, width, 3, 1,
                        ag::Padding::Zero, rng);
  }
}

ag::Tensor ConvTower::operator()(const ag::Tensor& x) const {
  ag::Tensor h = x;
  for (std::size_t b = 0; b < convs_.size(); ++b) {
    h = ag::relu(convs_[b](norms_[b](h)));
  }
  return h;
}

ag::Tensor apply_conv_blocks(const ag::Tensor& x, const ConvTower& tower) {
  return tower(x);
}

ag::Tensor classification_head(const ag::Tensor& z, const ag::Tensor& w_cls,
                               const ag::Tensor& b_cls) {
  if (z.cols() != w_cls.rows()) throw InputError("classification head width mismatch");
  return ag::add_bias(ag::matmul(z, w_cls), b_cls);
}

ag::Tensor regression_head(const ag::Tensor& z, const ag::Tensor& w_reg,
                           const ag::Tensor& b_reg) {
  if (z.cols() != w_reg.rows()) throw InputError("regression head width mismatch");
  return ag::relu(ag::add_bias(ag::matmul(z, w_reg), b_reg));
}

HeadParams::HeadParams(nn::ParameterStore& store, int width, int blocks,
                       double prior_logit, Rng& rng, int cls_outputs, int reg_outputs,
                       const std::string& prefix)
    : cls_tower(store, prefix + ".cls_tower", width, blocks, rng),
      reg_tower(store, prefix + ".reg_tower", width, blocks, rng),
      w_cls(store.create(prefix + ".w_cls", "heads",
                         rng.normal_matrix(width, cls_outputs, 0.01))),
      b_cls(store.create(prefix + ".b_cls", "heads",
                         ag::Matrix::Constant(1, cls_outputs,
                                              static_cast<float>(prior_logit)))),
      w_reg(store.create(prefix + ".w_reg", "heads",
                         rng.normal_matrix(width, reg_outputs, 0.01))),
      b_reg(store.create(prefix + ".b_reg", "heads",
                         ag::Matrix::Constant(1, reg_outputs, 1.0f))) {}

LevelOutput HeadParams::operator()(const ag::Tensor& level, bool with_regression) const {
  LevelOutput out;
  out.logits = classification_head(cls_tower(level), w_cls, b_cls);
  if (with_regression) {
    out.displacement = regression_head(reg_tower(level), w_reg, b_reg);
  }
  return out;
}

NoTextOutput no_text_heads(TextMode mode, const ag::Tensor& z_cls,
                           const ag::Tensor& z_reg, const ag::Tensor& w_cls,
                           const ag::Tensor& b_cls, const ag::Tensor& w_reg,
                           const ag::Tensor& b_reg) {
  if (mode != TextMode::NoText) {
    throw ContractError("class-indexed heads are only defined for text_mode no-text");
  }
  if (w_reg.cols() != 2 * w_cls.cols()) {
    throw InputError("no-text regression projection must have 2C columns");
  }
  return {classification_head(z_cls, w_cls, b_cls),
          regression_head(z_reg, w_reg, b_reg)};
}

}  // namespace unloc
