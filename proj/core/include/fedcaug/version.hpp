#pragma once

#define FEDCAUG_VERSION "0.1.0"
