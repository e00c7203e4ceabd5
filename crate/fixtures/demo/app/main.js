var growl = require("growl");
var message = 'You have mail!';
growl(message);
