exports = module.exports = growl;

var exec = require('child_process').exec;
var cmd = { pkg: "notify-send" };

function quote(str) {
  return '"' + str + '"';
}

function growl(msg, fn) {
  var args = [cmd.pkg];
  args.push(quote(msg));
  exec(args.join(' '), function (err, stdout, stderr) {
    if (fn) fn(err);
  });
}
