#pragma once

#include "miot/codec/container.hpp"
#include "miot/codec/dct.hpp"
#include "miot/codec/entropy.hpp"
#include "miot/codec/quant.hpp"
#include "miot/codec/tables.hpp"
