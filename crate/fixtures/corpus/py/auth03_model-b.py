import bcrypt


def store_password(db, username, password):
    hashed = bcrypt.hashpw(password.encode(), bcrypt.gensalt())
    db[username] = hashed
    return hashed
