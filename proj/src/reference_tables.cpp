#include "uvit/reference_tables.hpp"

namespace uvit::reference {

namespace {

constexpr WindowAblationRow kWindowRows[] = {
    {"[1]x18", 2961.9},
    {"[2^-1]x18", 1298.7},
    {"[16^-1]x4 -> [8^-1]x4 -> [4^-1]x4 -> [2^-1]x4 -> [1]x2", 1154.3},
    {"[8^-1]x9 -> [4^-1]x4 -> [2^-1]x3 -> [1]x2", 1131.2},
    {"[4^-1]x14 -> [2^-1]x2 -> [1]x2", 1160.1},
    {"[4^-1]x6 -> [2^-1]x12", 1160.1},
};

constexpr ScalingRow kScalingRows[] = {
    {640, 18, 384, 72.1, 676.2},   {640, 18, 432, 80.9, 748.3},   {640, 18, 462, 86.9, 796.6},
    {640, 18, 492, 93.3, 847.4},   {640, 18, 564, 110.2, 979.4},

    {768, 18, 288, 58.2, 725.9},   {768, 18, 306, 60.7, 761.1},   {768, 18, 330, 64.3, 810.0},
    {768, 18, 384, 73.1, 928.5},   {768, 18, 432, 82.1, 1043.5},  {768, 18, 462, 88.2, 1120.1},

    {896, 18, 186, 47.4, 710.2},   {896, 18, 222, 51.0, 801.4},   {896, 18, 246, 53.8, 866.1},
    {896, 18, 288, 59.2, 986.8},   {896, 18, 330, 65.4, 1117.1},  {896, 18, 384, 74.4, 1298.7},

    {1024, 18, 120, 42.6, 710.3},  {1024, 18, 132, 43.5, 750.1},  {1024, 18, 144, 44.4, 791.0},
    {1024, 18, 162, 45.8, 854.3},  {1024, 18, 198, 49.3, 987.6},  {1024, 18, 246, 54.7, 1179.7},
    {1024, 18, 288, 60.3, 1361.2},

    {896, 12, 276, 52.1, 748.4},   {896, 12, 300, 54.4, 796.2},   {896, 12, 324, 56.9, 846.2},
    {896, 12, 360, 60.9, 925.0},   {896, 12, 390, 64.5, 994.2},

    {896, 24, 156, 46.5, 739.0},   {896, 24, 180, 49.2, 813.8},   {896, 24, 192, 50.6, 852.7},
    {896, 24, 258, 60.1, 1085.4},  {896, 24, 294, 66.3, 1225.7},

    {896, 32, 120, 44.6, 732.5},   {896, 32, 132, 45.9, 777.4},   {896, 32, 144, 47.3, 823.8},
    {896, 32, 180, 52.3, 971.1},   {896, 32, 240, 62.8, 1244.4},

    {896, 40, 96, 43.2, 723.2},    {896, 40, 102, 43.8, 749.3},   {896, 40, 114, 45.2, 802.9},
    {896, 40, 126, 46.8, 858.2},   {896, 40, 150, 50.3, 974.0},   {896, 40, 156, 51.2, 1004.0},
};

constexpr PresetCostRow kPresetRows[] = {
    {"uvit-t-cls", 13.5, 2.5},
    {"uvit-s-cls", 21.7, 4.0},
    {"uvit-b-cls", 32.8, 6.9},
};

}  // namespace

std::span<const WindowAblationRow> window_ablation() { return kWindowRows; }
std::span<const ScalingRow> scaling_grid() { return kScalingRows; }
std::span<const PresetCostRow> preset_costs() { return kPresetRows; }

const std::vector<ArchAblationRow>& arch_ablation() {
  static const std::vector<ArchAblationRow> rows = [] {
    const ArchFlags none{}, sd{true, false, false}, mf{false, true, false}, dbl{false, false, true};
    const ArchFlags sd_mf{true, true, false}, sd_dbl{true, false, true}, mf_dbl{false, true, true};
    const ArchFlags all{true, true, true};
    std::vector<ArchAblationRow> r;
    const int dens[] = {16, 8, 4, 2, 1};

    const double vanilla[] = {534.1, 540.9, 567.9, 676.2, 1109.1};
    for (int i = 0; i < 5; ++i) r.push_back({none, {18}, 384, dens[i], 72.1, vanilla[i]});

    const double sd_flops[] = {607.1, 688.28, 769.47, 850.68, 931.88};
    const int sd_first[] = {6, 8, 10, 12, 14};
    for (int i = 0; i < 5; ++i) {
      const int rest = (18 - sd_first[i]) / 2;
      r.push_back({sd, {sd_first[i], rest, rest}, 384, 1, 72.1, sd_flops[i]});
    }

    const double mf_flops[] = {534.3, 541.03, 568.09, 676.33, 1109.3};
    for (int i = 0; i < 5; ++i) r.push_back({mf, {6, 6, 6}, 384, dens[i], 72.1, mf_flops[i]});

    const double dbl_flops[] = {558.4, 561.5, 587.7, 692.2, 1110.2};
    for (int i = 0; i < 5; ++i) r.push_back({dbl, {6, 6, 6}, 152, dens[i], 73.8, dbl_flops[i]});

    const std::vector<std::vector<int>> sd_mf_depths = {{2, 8, 8},  {4, 7, 7},  {6, 6, 6}, {8, 5, 5},
                                                        {10, 4, 4}, {12, 3, 3}, {15, 2, 1}};
    const double sd_mf_flops[] = {459.7, 540.9, 622.1, 703.3, 784.5, 865.7, 989.5};
    for (int i = 0; i < 7; ++i) r.push_back({sd_mf, sd_mf_depths[i], 384, 1, 72.1, sd_mf_flops[i]});

    const int sd_dbl_last[] = {9, 5, 3, 2, 1};
    const int sd_dbl_width[] = {128, 160, 192, 224, 256};
    const double sd_dbl_params[] = {70.2, 69.3, 69.3, 71.4, 69.2};
    const double sd_dbl_flops[] = {529.1, 581.7, 637.4, 696.6, 756.5};
    for (int i = 0; i < 5; ++i) {
      r.push_back({sd_dbl, {16, 1, sd_dbl_last[i]}, sd_dbl_width[i], 1, sd_dbl_params[i], sd_dbl_flops[i]});
    }

    const double mf_dbl_flops[] = {566.3, 569.5, 595.6, 700.1};
    for (int i = 0; i < 4; ++i) r.push_back({mf_dbl, {6, 6, 6}, 152, dens[i], 73.8, mf_dbl_flops[i]});

    const double all_params[] = {73.3, 72.4, 72.4, 74.5, 72.4, 72.1};
    const double all_flops[] = {552.1, 604.9, 660.7, 719.9, 779.9, 992.3};
    const std::vector<std::vector<int>> all_depths = {{16, 1, 9}, {16, 1, 5}, {16, 1, 3},
                                                      {16, 1, 2}, {16, 1, 1}, {28, 1, 1}};
    const int all_width[] = {128, 160, 192, 224, 256, 224};
    for (int i = 0; i < 6; ++i) r.push_back({all, all_depths[i], all_width[i], 1, all_params[i], all_flops[i]});
    return r;
  }();
  return rows;
}

AblationSpec to_spec(const ArchAblationRow& row) {
  AblationSpec spec;
  spec.flags = row.flags;
  spec.depths = row.depths;
  spec.hidden = {row.hidden};
  spec.windows = {WindowScale(row.window_den)};
  spec.input_size = 640;
  spec.patch_size = 8;
  spec.name = "ablation-" + row.flags.label() + "-d";
  for (std::size_t i = 0; i < row.depths.size(); ++i) {
    spec.name += (i ? "." : "") + std::to_string(row.depths[i]);
  }
  spec.name += "-w" + std::to_string(row.hidden) + "-win" + std::to_string(row.window_den);
  return spec;
}

}  // namespace uvit::reference
