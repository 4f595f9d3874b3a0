#pragma once

#include "adaptaug/augment.hpp"
#include "adaptaug/checkpoint.hpp"
#include "adaptaug/contrastive.hpp"
#include "adaptaug/data.hpp"
#include "adaptaug/encoder.hpp"
#include "adaptaug/gradcheck.hpp"
#include "adaptaug/graph.hpp"
#include "adaptaug/image.hpp"
#include "adaptaug/infonce.hpp"
#include "adaptaug/metrics.hpp"
#include "adaptaug/optim.hpp"
#include "adaptaug/policy.hpp"
#include "adaptaug/policy_queue.hpp"
#include "adaptaug/ppo.hpp"
#include "adaptaug/reward.hpp"
#include "adaptaug/rng.hpp"
#include "adaptaug/tensor.hpp"
