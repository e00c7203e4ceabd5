var processWrap = internalBinding('process_wrap');

function normalizeExecArgs(command, options, callback) {
  if (typeof options === 'function') {
    callback = options;
    options = undefined;
  }
  return { file: command, options: options, callback: callback };
}

function spawn(file, args, options) {
  return processWrap.spawn({ file: file, args: args, options: options });
}

function execFile(file, options, callback) {
  return spawn('/bin/sh', ['-c', file], options);
}

function exec(command, options, callback) {
  var opts = normalizeExecArgs(command, options, callback);
  return execFile(opts.file, opts.options, opts.callback);
}

module.exports = {
  exec: exec,
  execFile: execFile,
  spawn: spawn
};
