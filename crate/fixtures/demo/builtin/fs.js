var binding = internalBinding('fs');

function access(path, mode, callback) {
  binding.access(path, mode, callback);
}

function open(path, flags, callback) {
  return binding.open(path, flags, callback);
}

function readFile(path, options, callback) {
  var fd = binding.open(path, 0);
  binding.read(fd, options, callback);
}

function unlink(path, callback) {
  binding.unlink(path, callback);
}

function rmdir(path, callback) {
  binding.rmdir(path, callback);
}

function writeFile(path, data, callback) {
  binding.writeString(path, data, callback);
}

exports.access = access;
exports.open = open;
exports.readFile = readFile;
exports.unlink = unlink;
exports.rmdir = rmdir;
exports.writeFile = writeFile;
