import os
from fgel import create_app

app = create_app(os.getenv("FGEL_ENV", "default"))

if __name__ == "__main__":
    app.run(host="127.0.0.1", port=5000, debug=False)
