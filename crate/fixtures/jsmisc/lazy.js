function later() {
  return require("left-pad");
}
exports.later = later;
