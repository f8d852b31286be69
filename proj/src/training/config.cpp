#include "rtnet/json_util.hpp"
#include "rtnet/training_json.hpp"

namespace rtnet::training {

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"contrastive_batch_size", c.contrastive_batch_size},
          {"head_batch_size", c.head_batch_size},
          {"lr", c.lr},
          {"patience", c.patience},
          {"alpha", c.alpha},
          {"instances", c.instances},
          {"beta", c.beta},
          {"seed", c.seed},
          {"max_batches_per_epoch", c.max_batches_per_epoch},
          {"max_eval_windows", c.max_eval_windows},
          {"eval_batch_size", c.eval_batch_size}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  StrictObject o(j, "train");
  o.optional("epochs", c.epochs);
  o.optional("batch_size", c.batch_size);
  o.optional("contrastive_batch_size", c.contrastive_batch_size);
  o.optional("head_batch_size", c.head_batch_size);
  o.optional("lr", c.lr);
  o.optional("patience", c.patience);
  o.optional("alpha", c.alpha);
  o.optional("instances", c.instances);
  o.optional("beta", c.beta);
  o.optional("seed", c.seed);
  o.optional("max_batches_per_epoch", c.max_batches_per_epoch);
  o.optional("max_eval_windows", c.max_eval_windows);
  o.optional("eval_batch_size", c.eval_batch_size);
  o.finish();
  c.validate();
  return c;
}

nlohmann::json to_json(const History& h) {
  auto records = [](const std::vector<EpochRecord>& rs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rs)
      out.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_mse", r.val_mse}, {"val_mae", r.val_mae}});
    return out;
  };
  return {{"epochs", records(h.epochs)},
          {"stage1", records(h.stage1)},
          {"best_epoch", h.best_epoch},
          {"stopped_early", h.stopped_early}};
}

}  // namespace rtnet::training
