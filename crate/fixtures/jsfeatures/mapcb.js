var doubled = [1, 2, 3].map(x => x * 2);
module.exports = doubled;
